"""Dataset manifests: one JSON record per line, paths relative to the manifest file.

Field order of every record::

    scene_id, row, col, split, a, b, mask

``mask`` is ``null`` for unlabeled data.  Patches are PNG files; masks are
single-channel {0, 255}.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from pairtranslate.data.grid import PairedPatchSample
from pairtranslate.data.imageio import read_mask, read_png, write_mask, write_png
from pairtranslate.errors import IntegrityError

MANIFEST_NAME = "manifest.jsonl"
FIELDS = ("scene_id", "row", "col", "split", "a", "b", "mask")


@dataclass
class PatchRecord:
    scene_id: str
    row: int
    col: int
    split: str
    a: str
    b: str
    mask: str | None = None

    @property
    def key(self) -> str:
        return f"{self.scene_id}_r{self.row}_c{self.col}"

    def to_json(self) -> str:
        return json.dumps({k: getattr(self, k) for k in FIELDS})


@dataclass
class DatasetManifest:
    path: Path
    records: list[PatchRecord] = field(default_factory=list)

    @property
    def root(self) -> Path:
        return self.path.parent

    def __len__(self) -> int:
        return len(self.records)

    def split(self, name: str | None) -> "DatasetManifest":
        if name is None:
            return self
        return DatasetManifest(self.path, [r for r in self.records if r.split == name])

    @property
    def has_masks(self) -> bool:
        return bool(self.records) and all(r.mask is not None for r in self.records)

    def resolve(self, rel: str) -> Path:
        return self.root / rel

    def load(self, record: PatchRecord) -> PairedPatchSample:
        mask = None if record.mask is None else read_mask(self.resolve(record.mask))
        return PairedPatchSample(
            record.scene_id,
            (record.row, record.col),
            read_png(self.resolve(record.a)),
            read_png(self.resolve(record.b)),
            mask,
            record.split,
        )

    def samples(self) -> list[PairedPatchSample]:
        return [self.load(r) for r in self.records]


def write_manifest(samples, root, name: str = MANIFEST_NAME) -> DatasetManifest:
    """Write every sample's patches under ``root/patches`` and the manifest at ``root/name``."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    records = []
    for s in samples:
        key = s.key
        rec = PatchRecord(
            s.scene_id, int(s.anchor[0]), int(s.anchor[1]), s.split,
            f"patches/{key}_A.png", f"patches/{key}_B.png",
            None if s.mask is None else f"patches/{key}_mask.png",
        )
        write_png(root / rec.a, s.image_A)
        write_png(root / rec.b, s.image_B)
        if s.mask is not None:
            write_mask(root / rec.mask, s.mask)
        records.append(rec)
    path = root / name
    path.write_text("".join(r.to_json() + "\n" for r in records))
    return DatasetManifest(path, records)


def read_manifest(path, check_files: bool = True) -> DatasetManifest:
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.is_file():
        raise IntegrityError(f"manifest not found: {path}")
    records = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            rec = PatchRecord(**{k: obj[k] for k in FIELDS})
        except (ValueError, KeyError, TypeError) as exc:
            raise IntegrityError(f"{path}:{lineno}: malformed record ({exc})") from exc
        records.append(rec)
    manifest = DatasetManifest(path, records)
    if check_files:
        for rec in records:
            for rel in (rec.a, rec.b, rec.mask):
                if rel is not None and not manifest.resolve(rel).is_file():
                    raise IntegrityError(f"missing patch file {manifest.resolve(rel)} ({rec.key})")
    return manifest
