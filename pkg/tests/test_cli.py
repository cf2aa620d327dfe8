import json

import numpy as np
import pytest
import torch
import yaml

from pairtranslate import cli
from pairtranslate.data import read_manifest
from pairtranslate.data.imageio import read_mask, write_mask, write_png
from pairtranslate.errors import NumericError
from pairtranslate.eval import evaluate_translation, format_table, identity_translator
from pairtranslate.trainer import load_checkpoint

TINY = {
    "train": {"epochs": 1, "batch_size": 2, "checkpoint_interval": 1},
    "generator": {"base_width": 4, "num_downsamples": 3},
    "discriminator": {"base_width": 4, "layers_per_scale": 3},
    "data": {"num_scenes": 6, "test_fraction": 0.34},
}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "tiny.yaml"
    path.write_text(yaml.safe_dump(TINY))
    return path


@pytest.fixture
def dataset(tmp_path, tiny_config):
    out = tmp_path / "ds"
    assert cli.main(["synth", "--config", str(tiny_config), "--seed", "7", "--out", str(out)]) == 0
    return out


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def params_equal(s1, s2):
    return all(torch.equal(a, b) for a, b in zip(s1.generator.state_dict().values(),
                                                s2.generator.state_dict().values()))


class TestSynth:
    def test_reproducible(self, tmp_path, tiny_config, dataset):
        again = tmp_path / "ds2"
        cli.main(["synth", "--config", str(tiny_config), "--seed", "7", "--out", str(again)])
        assert tree_bytes(dataset) == tree_bytes(again)
        cfg = yaml.safe_load((dataset / "config.yaml").read_text())
        assert cfg["train"]["seed"] == 7 and cfg["synth"]["seed"] == 7

    def test_split(self, dataset):
        m = read_manifest(dataset)
        assert len(m) == 6
        assert [r.split for r in m.records].count("test") == 2

    def test_zero_change(self, tmp_path, tiny_config):
        out = tmp_path / "flat"
        cli.main(["synth", "--config", str(tiny_config), "--change-fraction", "0", "--out", str(out)])
        m = read_manifest(out)
        assert all(not read_mask(m.resolve(r.mask)).any() for r in m.records)

    def test_flags_override_file(self, tmp_path, tiny_config):
        out = tmp_path / "few"
        cli.main(["synth", "--config", str(tiny_config), "--num-scenes", "2", "--set", "data.test_fraction=0",
                  "--out", str(out)])
        assert len(read_manifest(out)) == 2
        assert yaml.safe_load((out / "config.yaml").read_text())["data"]["num_scenes"] == 2

    def test_unknown_key(self, tmp_path, tiny_config):
        assert cli.main(["synth", "--config", str(tiny_config), "--set", "synth.nope=1",
                         "--out", str(tmp_path / "x")]) == 1


class TestTile:
    def _pair(self, tmp_path, h, w, wb=None):
        write_png(tmp_path / "a.png", np.zeros((h, w, 3), np.uint8))
        write_png(tmp_path / "b.png", np.full((h, wb or w, 3), 200, np.uint8))
        write_mask(tmp_path / "m.png", np.zeros((h, w), np.uint8))

    def test_full_scene(self, tmp_path):
        self._pair(tmp_path, 2700, 4725)
        rc = cli.main(["tile", "--image-a", str(tmp_path / "a.png"), "--image-b", str(tmp_path / "b.png"),
                       "--mask", str(tmp_path / "m.png"), "--out", str(tmp_path / "tiles")])
        assert rc == 0
        assert len(read_manifest(tmp_path / "tiles")) == 756

    def test_no_overlap(self, tmp_path):
        self._pair(tmp_path, 512, 512)
        cli.main(["tile", "--image-a", str(tmp_path / "a.png"), "--image-b", str(tmp_path / "b.png"),
                  "--overlap", "0", "--out", str(tmp_path / "tiles")])
        assert len(read_manifest(tmp_path / "tiles")) == 4

    def test_mismatched_sizes(self, tmp_path, capsys):
        self._pair(tmp_path, 300, 300, wb=320)
        rc = cli.main(["tile", "--image-a", str(tmp_path / "a.png"), "--image-b", str(tmp_path / "b.png"),
                       "--out", str(tmp_path / "tiles")])
        assert rc == 1
        assert "differ" in capsys.readouterr().err

    def test_missing_image(self, tmp_path):
        rc = cli.main(["tile", "--image-a", str(tmp_path / "no.png"), "--image-b", str(tmp_path / "no.png"),
                       "--out", str(tmp_path / "tiles")])
        assert rc == 2


def train_args(tiny_config, dataset, out, *extra):
    return ["train", "--config", str(tiny_config), "--manifest", str(dataset / "manifest.jsonl"),
            "--out", str(out), *extra]


class TestTrain:
    def test_smoke(self, tmp_path, tiny_config, dataset):
        out = tmp_path / "run"
        assert cli.main(train_args(tiny_config, dataset, out, "--share-weights", "off")) == 0
        assert (out / "checkpoints" / "last.ckpt").is_file()
        assert (out / "metrics.jsonl").read_text().strip()
        cfg = yaml.safe_load((out / "config.yaml").read_text())
        assert cfg["generator"]["share_weights"] is False
        assert cfg["generator"]["patch_size"] == 64
        assert load_checkpoint(out / "checkpoints" / "last.ckpt").generator.config.share_weights is False

    def test_resume_matches_uninterrupted(self, tmp_path, tiny_config, dataset):
        full, part = tmp_path / "full", tmp_path / "part"
        cli.main(train_args(tiny_config, dataset, full, "--epochs", "2"))
        cli.main(train_args(tiny_config, dataset, part, "--epochs", "1"))
        cli.main(train_args(tiny_config, dataset, part, "--epochs", "2", "--resume"))
        a = load_checkpoint(full / "checkpoints" / "last.ckpt")
        b = load_checkpoint(part / "checkpoints" / "last.ckpt")
        assert a.step == b.step and a.epoch == b.epoch == 2
        assert params_equal(a, b)

    def test_missing_manifest(self, tmp_path, tiny_config):
        rc = cli.main(["train", "--config", str(tiny_config), "--manifest", str(tmp_path / "none"),
                       "--out", str(tmp_path / "r")])
        assert rc == 1

    def test_numeric_failure_exit_code(self, tmp_path, tiny_config, dataset, monkeypatch):
        def boom(*a, **k):
            raise NumericError("non-finite loss term rec_A=nan at step 1")
        monkeypatch.setattr(cli, "train", boom)
        assert cli.main(train_args(tiny_config, dataset, tmp_path / "r")) == 3

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc:
            cli.main(["train", "--epochs", "x"])
        assert exc.value.code == 1


@pytest.fixture
def trained(tmp_path, tiny_config, dataset):
    out = tmp_path / "run"
    cli.main(train_args(tiny_config, dataset, out))
    return out / "checkpoints" / "last.ckpt"


class TestTranslateEval:
    def test_directions_and_pipeline(self, tmp_path, dataset, trained, capsys):
        for d in ("a2b", "b2a"):
            assert cli.main(["translate", "--checkpoint", str(trained), "--manifest", str(dataset),
                             "--direction", d, "--out", str(tmp_path / "tr")]) == 0
        key = read_manifest(dataset).records[0].key
        a2b = (tmp_path / "tr" / f"{key}_a2b.png").read_bytes()
        b2a = (tmp_path / "tr" / f"{key}_b2a.png").read_bytes()
        assert a2b != b2a
        capsys.readouterr()
        assert cli.main(["eval", "--manifest", str(dataset), "--translated-dir", str(tmp_path / "tr"),
                         "--out", str(tmp_path / "ev")]) == 0
        lines = (tmp_path / "ev" / "metrics.tsv").read_text().splitlines()
        assert lines[0].split("\t") == ["method", "data", "acc", "miou", "precision", "recall", "f1", "tv"]
        assert len(lines) == 3

    def test_missing_checkpoint(self, tmp_path, dataset):
        rc = cli.main(["translate", "--checkpoint", str(tmp_path / "none.ckpt"), "--manifest", str(dataset),
                       "--out", str(tmp_path / "tr")])
        assert rc == 2

    def test_base_without_checkpoint(self, tmp_path, dataset):
        assert cli.main(["eval", "--manifest", str(dataset), "--out", str(tmp_path / "ev")]) == 0
        rows = (tmp_path / "ev" / "metrics.tsv").read_text().splitlines()
        assert len(rows) == 2 and rows[1].startswith("base\tA vs. B")
        recs = [json.loads(x) for x in (tmp_path / "ev" / "records.jsonl").read_text().splitlines()]
        assert len(recs) == 2  # the test split

    def test_matches_library(self, tmp_path, dataset, trained):
        cli.main(["eval", "--manifest", str(dataset), "--checkpoint", str(trained), "--out", str(tmp_path / "ev")])
        test = read_manifest(dataset).split("test")
        state = load_checkpoint(trained)
        expected = format_table([
            evaluate_translation(identity_translator, test, name="base"),
            evaluate_translation(state.generator, test, name="translated"),
        ])
        assert (tmp_path / "ev" / "metrics.tsv").read_text() == expected

    def test_both_sources_rejected(self, tmp_path, dataset, trained):
        rc = cli.main(["eval", "--manifest", str(dataset), "--checkpoint", str(trained),
                       "--translated-dir", str(tmp_path), "--out", str(tmp_path / "ev")])
        assert rc == 1


class TestAblate:
    def test_share_weights(self, tmp_path, tiny_config, capsys):
        out = tmp_path / "abl"
        assert cli.main(["ablate", "--config", str(tiny_config), "--axis", "share_weights",
                         "--num-scenes", "3", "--out", str(out)]) == 0
        lines = (out / "ablation.tsv").read_text().splitlines()
        header, rows = lines[0].split("\t"), [line.split("\t") for line in lines[1:]]
        assert header[:3] == ["rank", "variant", "f1"]
        assert sorted(r[1] for r in rows) == ["share_weights=off", "share_weights=on"]
        f1 = [float(r[2]) for r in rows]
        assert f1 == sorted(f1, reverse=True)
        assert rows[0][-1] != rows[1][-1]  # shared-parameter checksums differ
        assert (out / "share_weights_on" / "config.yaml").is_file()

    @pytest.mark.slow
    def test_depth(self, tmp_path, tiny_config):
        out = tmp_path / "abl"
        assert cli.main(["ablate", "--config", str(tiny_config), "--axis", "depth",
                         "--num-scenes", "3", "--out", str(out)]) == 0
        variants = {line.split("\t")[1] for line in (out / "ablation.tsv").read_text().splitlines()[1:]}
        assert variants == {"depth=3", "depth=4", "depth=5"}


def test_verbosity_env(monkeypatch, tmp_path, tiny_config, capsys):
    monkeypatch.setenv("PAIRTRANSLATE_VERBOSITY", "0")
    cli.main(["synth", "--config", str(tiny_config), "--num-scenes", "1", "--set", "data.test_fraction=0",
              "--out", str(tmp_path / "q")])
    assert "INFO" not in capsys.readouterr().err
