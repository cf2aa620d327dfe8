import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pairtranslate.data import (
    PairedScene,
    SynthConfig,
    assign_region_split,
    compute_patch_grid,
    denormalize,
    generate_scenes,
    generate_synthetic_pair,
    normalize,
    read_manifest,
    tile,
    write_manifest,
)
from pairtranslate.errors import ConfigError, DimensionError, GenerationError, IntegrityError

from oracles import enumerate_anchors


def random_scene(h, w, seed=0, with_mask=True):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    m = rng.integers(0, 2, (h, w), dtype=np.uint8) if with_mask else None
    return PairedScene(a, b, m, scene_id="rand")


class TestGrid:
    def test_full_scene_count(self):
        # 4725 wide, 2700 tall, 256 px patches at 50% overlap
        grid = compute_patch_grid(2700, 4725, 256, 0.5)
        assert len(grid) == 756
        assert grid.stride == 128
        assert len(compute_patch_grid(4725, 2700, 256, 0.5)) == 756

    def test_clamped_edge(self):
        grid = compute_patch_grid(384, 256, 256, 0.5)
        assert grid.anchors == [(0, 0), (128, 0)]

    def test_exact_fit(self):
        assert compute_patch_grid(256, 256, 256, 0.5).anchors == [(0, 0)]

    def test_no_overlap(self):
        assert len(compute_patch_grid(512, 512, 256, 0.0)) == 4

    def test_patch_larger_than_image(self):
        with pytest.raises(DimensionError):
            compute_patch_grid(100, 300, 128, 0.5)

    @pytest.mark.parametrize("overlap", [-0.1, 1.0, 1.5])
    def test_bad_overlap(self, overlap):
        with pytest.raises(ConfigError):
            compute_patch_grid(512, 512, 256, overlap)

    def test_matches_enumeration_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            p = int(rng.integers(8, 300))
            h, w = int(rng.integers(p, 3000)), int(rng.integers(p, 3000))
            overlap = float(rng.choice([0.0, 0.25, 0.5, 0.75]))
            grid = compute_patch_grid(h, w, p, overlap)
            rows = enumerate_anchors(h, p, grid.stride)
            cols = enumerate_anchors(w, p, grid.stride)
            assert grid.anchors == [(r, c) for r in rows for c in cols]

    @settings(max_examples=100, deadline=None)
    @given(
        st.integers(16, 600), st.integers(16, 600), st.integers(4, 16),
        st.sampled_from([0.0, 0.25, 0.5, 0.75]),
    )
    def test_coverage_and_bounds(self, h, w, p, overlap):
        grid = compute_patch_grid(h, w, p, overlap)
        covered = np.zeros((h, w), bool)
        for r, c in grid.anchors:
            assert 0 <= r <= h - p and 0 <= c <= w - p
            covered[r:r + p, c:c + p] = True
        assert covered.all()
        assert len(set(grid.anchors)) == len(grid.anchors)


class TestTile:
    def test_patches_equal_crops(self):
        scene = random_scene(70, 90, seed=1)
        grid = compute_patch_grid(70, 90, 32, 0.5)
        samples = tile(scene, grid)
        assert len(samples) == len(grid)
        for s in samples:
            r, c = s.anchor
            assert np.array_equal(s.image_A, scene.image_A[r:r + 32, c:c + 32])
            assert np.array_equal(s.image_B, scene.image_B[r:r + 32, c:c + 32])
            assert np.array_equal(s.mask, scene.change_mask[r:r + 32, c:c + 32])

    def test_mismatched_pair(self):
        with pytest.raises(DimensionError):
            PairedScene(np.zeros((10, 10, 3), np.uint8), np.zeros((10, 12, 3), np.uint8))

    def test_region_split_is_disjoint(self):
        scene = random_scene(512, 256)
        samples = tile(scene, compute_patch_grid(512, 256, 64, 0.5))
        kept = assign_region_split(samples, 512, 0.25)
        cut = 384
        train = [s for s in kept if s.split == "train"]
        test = [s for s in kept if s.split == "test"]
        assert train and test
        assert all(s.anchor[0] + 64 <= cut for s in train)
        assert all(s.anchor[0] >= cut for s in test)
        # straddlers dropped
        assert len(kept) < len(samples)


class TestNormalize:
    def test_values(self):
        x = normalize(np.array([0, 255, 128], dtype=np.uint8))
        assert x.dtype == np.float32
        assert x[0] == -1.0 and x[1] == 1.0
        assert x[2] == pytest.approx(0.00392, abs=1e-5)

    def test_round_trip_exact(self):
        x = np.arange(256, dtype=np.uint8)
        assert np.array_equal(denormalize(normalize(x)), x)

    def test_denormalize_clips(self):
        assert denormalize(np.array([-3.0, 3.0])).tolist() == [0, 255]


class TestSynth:
    def test_deterministic(self):
        a = generate_synthetic_pair(SynthConfig(seed=5))
        b = generate_synthetic_pair(SynthConfig(seed=5))
        assert np.array_equal(a.image_A, b.image_A)
        assert np.array_equal(a.image_B, b.image_B)
        assert np.array_equal(a.change_mask, b.change_mask)

    def test_zero_change(self):
        s = generate_synthetic_pair(SynthConfig(change_fraction=0.0, seed=3))
        assert not s.change_mask.any()
        assert np.array_equal(s.labels_A, s.labels_B)
        # still a style difference between dates
        assert np.abs(s.image_A.astype(int) - s.image_B.astype(int)).mean() > 20

    def test_change_density(self):
        fracs = [generate_synthetic_pair(SynthConfig(change_fraction=0.1, seed=i)).change_mask.mean()
                 for i in range(20)]
        assert all(0.05 <= f <= 0.15 for f in fracs), fracs

    def test_mask_is_label_difference(self):
        for s in generate_scenes(SynthConfig(seed=11), 5):
            assert np.array_equal(s.change_mask.astype(bool), s.labels_A != s.labels_B)
            unchanged = ~s.change_mask.astype(bool)
            assert np.array_equal(s.labels_A[unchanged], s.labels_B[unchanged])

    def test_unreachable_fraction(self):
        with pytest.raises(GenerationError):
            generate_synthetic_pair(SynthConfig(num_shapes=0, change_fraction=0.5))

    def test_invalid_config(self):
        with pytest.raises(ConfigError):
            generate_synthetic_pair(SynthConfig(change_fraction=1.5))


class TestManifest:
    def test_round_trip(self, tmp_path):
        scene = random_scene(96, 96, seed=2)
        samples = tile(scene, compute_patch_grid(96, 96, 32, 0.5))
        m = write_manifest(samples, tmp_path)
        back = read_manifest(tmp_path / "manifest.jsonl").samples()
        assert len(back) == len(samples) == 25
        for s, t in zip(samples, back):
            assert s.key == t.key and s.split == t.split
            assert np.array_equal(s.image_A, t.image_A)
            assert np.array_equal(s.image_B, t.image_B)
            assert np.array_equal(s.mask, t.mask)
        assert m.has_masks

    def test_unlabeled(self, tmp_path):
        scene = random_scene(32, 32, with_mask=False)
        write_manifest(tile(scene, compute_patch_grid(32, 32, 32, 0)), tmp_path)
        m = read_manifest(tmp_path)
        assert not m.has_masks and m.samples()[0].mask is None

    def test_missing_file(self, tmp_path):
        scene = random_scene(64, 64)
        write_manifest(tile(scene, compute_patch_grid(64, 64, 32, 0)), tmp_path)
        victim = tmp_path / "patches" / "rand_r32_c0_B.png"
        victim.unlink()
        with pytest.raises(IntegrityError, match="rand_r32_c0_B.png"):
            read_manifest(tmp_path)

    def test_malformed_line(self, tmp_path):
        (tmp_path / "manifest.jsonl").write_text('{"scene_id": "x"}\n')
        with pytest.raises(IntegrityError, match=":1:"):
            read_manifest(tmp_path)

    def test_full_scene_manifest(self, tmp_path):
        scene = PairedScene(
            np.zeros((2700, 4725, 3), np.uint8), np.full((2700, 4725, 3), 255, np.uint8),
            np.zeros((2700, 4725), np.uint8), scene_id="big",
        )
        write_manifest(tile(scene, compute_patch_grid(2700, 4725, 256, 0.5)), tmp_path)
        m = read_manifest(tmp_path)
        assert len(m) == 756
        assert len({r.key for r in m.records}) == 756
