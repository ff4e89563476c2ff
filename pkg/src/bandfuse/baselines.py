"""Classical reference decompositions: Laplacian filtering and Haar DWT.

These are comparison outputs and independent oracles for the learned
decomposition, so they stay deliberately simple: plain numpy, no tape.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .tensor import Tensor, _conv_forward

# 4-neighbor template and the 8-neighbor extended template.
LAPLACIAN_G1 = np.array([[0, 1, 0],
                         [1, -4, 1],
                         [0, 1, 0]], dtype=np.float32)
LAPLACIAN_G2 = np.array([[1, 1, 1],
                         [1, -8, 1],
                         [1, 1, 1]], dtype=np.float32)

_KERNELS = {"g1": LAPLACIAN_G1, "g2": LAPLACIAN_G2}

_INV_SQRT2 = 1.0 / np.sqrt(2.0)


def laplacian_filter(image: Tensor, kernel: str = "g2") -> Tensor:
    """3x3 zero-padded Laplacian response; kernel is "g1" or "g2"."""
    key = kernel.lower()
    if key not in _KERNELS:
        raise ValueError(f"kernel must be 'g1' or 'g2', got {kernel!r}")
    x = image.data if isinstance(image, Tensor) else np.asarray(image)
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"expected (n,1,h,w), got {x.shape}")
    k = _KERNELS[key].astype(x.dtype).reshape(1, 1, 3, 3)
    return Tensor(_conv_forward(x, k, 1, 1))


@dataclass
class DwtBands:
    """Single-level 2-D Haar bands at half resolution.

    ll is the approximation; lh/hl/hh hold horizontal, vertical and
    diagonal detail (letter order: filter along x, then along y).
    """
    ll: Tensor
    lh: Tensor
    hl: Tensor
    hh: Tensor


def _analysis(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return (a + b) * _INV_SQRT2, (a - b) * _INV_SQRT2


def haar_dwt2(image: Tensor) -> DwtBands:
    """Orthonormal single-level Haar analysis; h and w must be even."""
    x = image.data if isinstance(image, Tensor) else np.asarray(image)
    if x.ndim != 4:
        raise ShapeError(f"expected 4-D input, got shape {x.shape}")
    h, w = x.shape[2], x.shape[3]
    if h % 2 or w % 2:
        raise ShapeError(f"spatial size {h}x{w} must be even for Haar DWT")
    lo_x, hi_x = _analysis(x[:, :, :, 0::2], x[:, :, :, 1::2])
    ll, lh = _analysis(lo_x[:, :, 0::2, :], lo_x[:, :, 1::2, :])
    hl, hh = _analysis(hi_x[:, :, 0::2, :], hi_x[:, :, 1::2, :])
    return DwtBands(ll=Tensor(ll), lh=Tensor(lh), hl=Tensor(hl), hh=Tensor(hh))


def haar_idwt2(bands: DwtBands) -> Tensor:
    """Exact inverse of haar_dwt2."""
    ll, lh = bands.ll.data, bands.lh.data
    hl, hh = bands.hl.data, bands.hh.data
    for other in (lh, hl, hh):
        if other.shape != ll.shape:
            raise ShapeError(
                f"band shapes disagree: {ll.shape} vs {other.shape}")
    n, c, hb, wb = ll.shape
    lo_x = np.empty((n, c, 2 * hb, wb), dtype=ll.dtype)
    hi_x = np.empty_like(lo_x)
    lo_x[:, :, 0::2, :], lo_x[:, :, 1::2, :] = _analysis(ll, lh)
    hi_x[:, :, 0::2, :], hi_x[:, :, 1::2, :] = _analysis(hl, hh)
    out = np.empty((n, c, 2 * hb, 2 * wb), dtype=ll.dtype)
    out[:, :, :, 0::2], out[:, :, :, 1::2] = _analysis(lo_x, hi_x)
    return Tensor(out)
