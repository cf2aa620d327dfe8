"""Change-detection based evaluation of translated images.

The detector is plain differencing: per-pixel mean absolute channel difference,
thresholded at a fixed value or by Otsu's method.  Confusion counts are pooled
over the whole evaluated set before metrics are computed.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np
import torch

from pairtranslate.data.grid import PairedPatchSample
from pairtranslate.data.imageio import normalize, to_images, to_tensor
from pairtranslate.data.manifest import DatasetManifest
from pairtranslate.errors import ConfigError, DimensionError
from pairtranslate.model import Domain, GeneratorPair

METRIC_COLUMNS = ("acc", "miou", "precision", "recall", "f1", "tv")


@dataclass
class ChangeMap:
    mask: np.ndarray
    threshold: float
    method: str


@dataclass
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass
class CDMetrics:
    accuracy: float
    miou: float
    precision: float
    recall: float
    f1: float
    undefined: tuple[str, ...] = ()


def otsu_threshold(values: np.ndarray, bins: int = 256) -> float:
    """Otsu's threshold on a 1-D sample; pixels strictly above it are foreground."""
    values = np.asarray(values, dtype=np.float64).ravel()
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return hi
    hist, edges = np.histogram(values, bins=bins, range=(lo, hi))
    centers = (edges[:-1] + edges[1:]) / 2
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    m0 = np.cumsum(hist * centers)
    mu0 = np.divide(m0, w0, out=np.zeros_like(m0), where=w0 > 0)
    mu1 = np.divide(m0[-1] - m0, w1, out=np.zeros_like(m0), where=w1 > 0)
    between = w0 * w1 * (mu0 - mu1) ** 2
    k = int(np.argmax(between[:-1]))
    return float(edges[k + 1])


def _hwc(image) -> np.ndarray:
    if isinstance(image, torch.Tensor):
        image = image.detach().cpu().numpy()
    arr = np.asarray(image, dtype=np.float64)
    return arr[..., None] if arr.ndim == 2 else arr


def difference_image(x, y) -> np.ndarray:
    x, y = _hwc(x), _hwc(y)
    if x.shape != y.shape:
        raise DimensionError(f"shape mismatch {x.shape} vs {y.shape}")
    return np.abs(x - y).mean(axis=-1)


def difference_change_map(x, y, method="otsu") -> ChangeMap:
    """``method`` is ``"otsu"`` or a fixed float threshold; inputs are HWC in [-1, 1]."""
    diff = difference_image(x, y)
    if method == "otsu":
        if not diff.any():
            return ChangeMap(np.zeros(diff.shape, np.uint8), 0.0, "otsu")
        t, tag = otsu_threshold(diff), "otsu"
    else:
        t, tag = float(method), "fixed"
    return ChangeMap((diff > t).astype(np.uint8), t, tag)


def confusion(pred, gt) -> ConfusionCounts:
    p = np.asarray(pred.mask if isinstance(pred, ChangeMap) else pred).astype(bool)
    g = np.asarray(gt).astype(bool)
    if p.shape != g.shape:
        raise DimensionError(f"prediction {p.shape} and ground truth {g.shape} differ")
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return ConfusionCounts(tp, fp, fn, p.size - tp - fp - fn)


def cd_metrics(c: ConfusionCounts) -> CDMetrics:
    """Zero-denominator ratios are reported as 0 and named in ``undefined``."""
    if c.total <= 0:
        raise ConfigError("no evaluated pixels")
    undefined = []

    def ratio(name, num, den):
        if den == 0:
            undefined.append(name)
            return 0.0
        return num / den

    precision = ratio("precision", c.tp, c.tp + c.fp)
    recall = ratio("recall", c.tp, c.tp + c.fn)
    f1 = ratio("f1", 2 * precision * recall, precision + recall)
    iou_change = ratio("iou_change", c.tp, c.tp + c.fp + c.fn)
    iou_static = ratio("iou_static", c.tn, c.tn + c.fp + c.fn)
    return CDMetrics(
        accuracy=(c.tp + c.tn) / c.total,
        miou=(iou_change + iou_static) / 2,
        precision=precision,
        recall=recall,
        f1=f1,
        undefined=tuple(undefined),
    )


def total_variation(image, reference=None) -> float:
    """Mean anisotropic TV on the 8-bit scale.

    ``mean|x[i, j+1] - x[i, j]| + mean|x[i+1, j] - x[i, j]|`` averaged over
    channels.  With ``reference`` the absolute TV gap to that image is returned.
    """
    x = (_hwc(image) + 1.0) * 127.5
    dx = np.abs(np.diff(x, axis=1)).mean() if x.shape[1] > 1 else 0.0
    dy = np.abs(np.diff(x, axis=0)).mean() if x.shape[0] > 1 else 0.0
    tv = float(dx + dy)
    if reference is not None:
        return abs(tv - total_variation(reference))
    return tv


Translator = Callable[[PairedPatchSample], np.ndarray]


def identity_translator(sample: PairedPatchSample) -> np.ndarray:
    """The "Base" protocol: compare A with B directly."""
    return normalize(sample.image_A)


def pair_translator(pair: GeneratorPair, src_domain="A", batch_size: int = 16) -> Translator:
    """Wrap a generator pair as a per-sample translator (HWC float in [-1, 1])."""
    src = Domain(src_domain)

    def run(sample: PairedPatchSample) -> np.ndarray:
        image = sample.image_A if src is Domain.A else sample.image_B
        with torch.no_grad():
            out = pair.translate(src, to_tensor(normalize(image)))
        return to_images(out)[0]

    run.pair = pair
    run.src = src
    run.batch_size = batch_size
    return run


@dataclass
class EvalReport:
    method: str
    data: str
    counts: ConfusionCounts
    metrics: CDMetrics
    mean_tv: float
    records: list[dict] = field(default_factory=list)

    def row(self) -> dict:
        m = self.metrics
        return {
            "method": self.method, "data": self.data,
            "acc": m.accuracy, "miou": m.miou, "precision": m.precision,
            "recall": m.recall, "f1": m.f1, "tv": self.mean_tv,
        }


def _batched_translations(translator, samples):
    """Yield translations; generator-backed translators run in batches."""
    pair = getattr(translator, "pair", None)
    if pair is None:
        for s in samples:
            yield translator(s)
        return
    src, bs = translator.src, translator.batch_size
    for i in range(0, len(samples), bs):
        chunk = samples[i:i + bs]
        images = [normalize(s.image_A if src is Domain.A else s.image_B) for s in chunk]
        with torch.no_grad():
            out = to_images(pair.translate(src, to_tensor(np.stack(images))))
        yield from out


def evaluate_translation(
    translator,
    source: DatasetManifest | Iterable[PairedPatchSample],
    method="otsu",
    name: str = "translated",
    direction: str = "a2b",
) -> EvalReport:
    """CD on (translated, target) against the change mask, pooled over all samples.

    ``translator`` is a :class:`GeneratorPair` or a callable mapping a sample to
    its translation.  With ``direction="a2b"`` the target is B (rows "t-B vs. B").
    """
    samples = source.samples() if isinstance(source, DatasetManifest) else list(source)
    if not samples:
        raise ConfigError("no samples to evaluate")
    if any(s.mask is None for s in samples):
        raise ConfigError("evaluation requires change masks on every sample")
    src = Domain.A if direction == "a2b" else Domain.B
    if isinstance(translator, GeneratorPair):
        translator = pair_translator(translator, src)
    total = ConfusionCounts()
    tvs, records = [], []
    for sample, translated in zip(samples, _batched_translations(translator, samples)):
        target = normalize(sample.image_B if src is Domain.A else sample.image_A)
        cmap = difference_change_map(translated, target, method)
        counts = confusion(cmap, sample.mask)
        tv = total_variation(translated)
        total = total + counts
        tvs.append(tv)
        records.append({"key": sample.key, "threshold": cmap.threshold, **asdict(counts), "tv": tv})
    data = ("t-B vs. B" if src is Domain.A else "t-A vs. A") if translator is not identity_translator else "A vs. B"
    return EvalReport(name, data, total, cd_metrics(total), float(np.mean(tvs)), records)


def format_table(reports: list[EvalReport]) -> str:
    header = ["method", "data", *METRIC_COLUMNS]
    lines = ["\t".join(header)]
    for rep in reports:
        row = rep.row()
        lines.append("\t".join(
            [row["method"], row["data"]] + [f"{row[c]:.4f}" for c in METRIC_COLUMNS]
        ))
    return "\n".join(lines) + "\n"


def write_report(reports: list[EvalReport], out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    table = out / "metrics.tsv"
    table.write_text(format_table(reports))
    with open(out / "records.jsonl", "w") as fh:
        for rep in reports:
            for rec in rep.records:
                fh.write(json.dumps({"method": rep.method, **rec}) + "\n")
    return table
