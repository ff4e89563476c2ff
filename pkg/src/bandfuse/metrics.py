"""Objective fusion-quality metrics and the evaluation report.

All functions take 2-D float images with values nominally in [0,1].
Histogram metrics (EN, MI) share one 8-bit quantizer so identities like
MI(a,a,a) = 2*EN(a) hold exactly.  Intensity metrics (SD, SF, AG, EI,
DF) are computed on the 0-255 scale without clamping; SCD is computed
on the raw values since correlation is scale-free.

Boundary conventions, chosen so every metric is exactly invariant
under horizontal/vertical flips: SF uses adjacent differences over
full rows/columns; AG and DF use central differences on the interior;
EI uses the Sobel operator on the interior.  With no interior pixels
(height or width < 3) the derivative metrics are 0 by convention.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .errors import ShapeError

METRIC_NAMES = ("EN", "SD", "SF", "AG", "EI", "DF", "MI", "SCD")

_SOBEL_X = np.array([[-1, 0, 1], [-2, 0, 2], [-1, 0, 1]], dtype=np.float64)
_SOBEL_Y = _SOBEL_X.T


def _as_image(img) -> np.ndarray:
    a = np.asarray(getattr(img, "data", img), dtype=np.float64)
    a = np.squeeze(a)
    if a.ndim != 2:
        raise ShapeError(f"expected a 2-D image, got shape {a.shape}")
    if a.size == 0:
        raise ShapeError("empty image")
    return a


def quantize_8bit(img) -> np.ndarray:
    """Clamp to [0,1] and map to integer levels 0..255 (round half up)."""
    a = _as_image(img)
    return np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.int64)


def entropy(img) -> float:
    """Shannon entropy (bits) of the 256-level histogram."""
    q = quantize_8bit(img)
    counts = np.bincount(q.ravel(), minlength=256)
    p = counts[counts > 0] / q.size
    return float(-(p * np.log2(p)).sum())


def std_dev(img) -> float:
    """Population standard deviation on the 0-255 scale."""
    return float((_as_image(img) * 255.0).std())


def _require_min_size(a: np.ndarray) -> None:
    if a.shape[0] < 2 or a.shape[1] < 2:
        raise ShapeError(f"image {a.shape} too small, need at least 2x2")


def spatial_frequency(img) -> float:
    """sqrt(RF^2 + CF^2) of mean squared adjacent differences."""
    a = _as_image(img) * 255.0
    _require_min_size(a)
    rf2 = np.mean(np.diff(a, axis=1) ** 2)
    cf2 = np.mean(np.diff(a, axis=0) ** 2)
    return float(np.sqrt(rf2 + cf2))


def _central_diffs(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    dx = (a[1:-1, 2:] - a[1:-1, :-2]) / 2.0
    dy = (a[2:, 1:-1] - a[:-2, 1:-1]) / 2.0
    return dx, dy


def avg_gradient(img) -> float:
    """Mean of sqrt((dx^2 + dy^2)/2) over interior pixels."""
    a = _as_image(img) * 255.0
    _require_min_size(a)
    if a.shape[0] < 3 or a.shape[1] < 3:
        return 0.0
    dx, dy = _central_diffs(a)
    return float(np.sqrt((dx * dx + dy * dy) / 2.0).mean())


def definition(img) -> float:
    """sqrt of the mean squared gradient magnitude over the interior."""
    a = _as_image(img) * 255.0
    _require_min_size(a)
    if a.shape[0] < 3 or a.shape[1] < 3:
        return 0.0
    dx, dy = _central_diffs(a)
    return float(np.sqrt((dx * dx + dy * dy).mean()))


def edge_intensity(img) -> float:
    """Mean Sobel gradient magnitude over interior pixels."""
    a = _as_image(img) * 255.0
    _require_min_size(a)
    if a.shape[0] < 3 or a.shape[1] < 3:
        return 0.0
    h, w = a.shape
    win = np.lib.stride_tricks.sliding_window_view(a, (3, 3))
    sx = (win * _SOBEL_X).sum(axis=(2, 3))
    sy = (win * _SOBEL_Y).sum(axis=(2, 3))
    return float(np.sqrt(sx * sx + sy * sy).mean())


def _mutual_info_pair(a: np.ndarray, b: np.ndarray) -> float:
    qa = quantize_8bit(a).ravel()
    qb = quantize_8bit(b).ravel()
    joint = np.bincount(qa * 256 + qb, minlength=256 * 256).astype(np.float64)
    joint /= qa.size
    pa = joint.reshape(256, 256).sum(axis=1)
    pb = joint.reshape(256, 256).sum(axis=0)
    outer = pa[:, None] * pb[None, :]
    j = joint.reshape(256, 256)
    mask = j > 0
    return float((j[mask] * np.log2(j[mask] / outer[mask])).sum())


def mutual_information(ir, vi, fused) -> float:
    """I(ir; fused) + I(vi; fused) from 256x256 joint histograms."""
    a, b, f = _as_image(ir), _as_image(vi), _as_image(fused)
    if a.shape != f.shape or b.shape != f.shape:
        raise ShapeError(
            f"shape mismatch: ir {a.shape}, vi {b.shape}, fused {f.shape}")
    return _mutual_info_pair(a, f) + _mutual_info_pair(b, f)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a0 = a - a.mean()
    b0 = b - b.mean()
    denom = np.sqrt((a0 * a0).sum() * (b0 * b0).sum())
    if denom == 0.0:
        return 0.0
    return float((a0 * b0).sum() / denom)


def scd(ir, vi, fused) -> float:
    """corr(fused - ir, vi) + corr(fused - vi, ir); zero-variance
    arguments contribute 0 by convention."""
    a, b, f = _as_image(ir), _as_image(vi), _as_image(fused)
    if a.shape != f.shape or b.shape != f.shape:
        raise ShapeError(
            f"shape mismatch: ir {a.shape}, vi {b.shape}, fused {f.shape}")
    if f.size < 2:
        raise ShapeError("scd needs at least 2 pixels")
    return _pearson(f - a, b) + _pearson(f - b, a)


def evaluate_triple(ir, vi, fused) -> dict[str, float]:
    """All eight metrics for one (ir, vi, fused) triple.  Single-image
    metrics score the fused image."""
    return {
        "EN": entropy(fused),
        "SD": std_dev(fused),
        "SF": spatial_frequency(fused),
        "AG": avg_gradient(fused),
        "EI": edge_intensity(fused),
        "DF": definition(fused),
        "MI": mutual_information(ir, vi, fused),
        "SCD": scd(ir, vi, fused),
    }


@dataclass
class MetricReport:
    rows: list[tuple[str, dict[str, float]]]
    means: dict[str, float]


def report(pairs: Iterable[tuple], names: Sequence[str] | None = None
           ) -> MetricReport:
    """Score every (ir, vi, fused) triple and append arithmetic means."""
    pairs = list(pairs)
    if not pairs:
        raise ValueError("report needs at least one (ir, vi, fused) triple")
    if names is None:
        names = [f"pair{i + 1}" for i in range(len(pairs))]
    elif len(names) != len(pairs):
        raise ValueError(f"{len(names)} names for {len(pairs)} triples")
    rows = [(name, evaluate_triple(ir, vi, fused))
            for name, (ir, vi, fused) in zip(names, pairs)]
    means = {m: float(np.mean([row[m] for _, row in rows]))
             for m in METRIC_NAMES}
    return MetricReport(rows=rows, means=means)


def write_csv(rep: MetricReport, dest: str | Path | TextIO) -> None:
    """CSV with one row per pair and a final mean row, 4 decimals."""
    def emit(f: TextIO) -> None:
        f.write("pair," + ",".join(METRIC_NAMES) + "\n")
        for name, row in rep.rows:
            f.write(name + "," + ",".join(f"{row[m]:.4f}" for m in METRIC_NAMES) + "\n")
        f.write("mean," + ",".join(f"{rep.means[m]:.4f}" for m in METRIC_NAMES) + "\n")

    if hasattr(dest, "write"):
        emit(dest)
    else:
        with open(dest, "w") as f:
            emit(f)
