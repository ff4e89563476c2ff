"""Combining two decompositions into one fused image.

Both source images are decomposed with the same model; each of the
three high-frequency bands is merged by a pixel rule (max or add), the
low-frequency band by another (avg or max), and the merged bands are
summed.  All four rules are commutative, so the fused image does not
depend on the argument order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .network import DecompositionModel, forward
from .tensor import Tensor

HIGH_RULES = ("max", "add")
LOW_RULES = ("avg", "max")


@dataclass(frozen=True)
class FusionStrategy:
    """One rule per band: high in {max, add}, low in {avg, max}."""
    high: str = "max"
    low: str = "avg"

    def __post_init__(self):
        if self.high not in HIGH_RULES:
            raise ValueError(f"high rule must be one of {HIGH_RULES}, got {self.high!r}")
        if self.low not in LOW_RULES:
            raise ValueError(f"low rule must be one of {LOW_RULES}, got {self.low!r}")


def _check_same_shape(a: Tensor, b: Tensor) -> None:
    if a.data.shape != b.data.shape:
        raise ShapeError(f"shape mismatch {a.shape} vs {b.shape}")


def fuse_high(a: Tensor, b: Tensor, rule: str) -> Tensor:
    """Merge one high-frequency band pair: elementwise max or sum."""
    _check_same_shape(a, b)
    if rule == "max":
        return Tensor(np.maximum(a.data, b.data))
    if rule == "add":
        return Tensor(a.data + b.data)
    raise ValueError(f"high rule must be one of {HIGH_RULES}, got {rule!r}")


def fuse_low(a: Tensor, b: Tensor, rule: str) -> Tensor:
    """Merge the low-frequency band pair: elementwise mean or max."""
    _check_same_shape(a, b)
    if rule == "avg":
        return Tensor((a.data + b.data) / 2.0)
    if rule == "max":
        return Tensor(np.maximum(a.data, b.data))
    raise ValueError(f"low rule must be one of {LOW_RULES}, got {rule!r}")


def fuse_images(model: DecompositionModel, ir: Tensor, vi: Tensor,
                strategy: FusionStrategy) -> Tensor:
    """Decompose both sources and sum the per-band merges.

    The band sum uses the same operand order as the reconstruction
    (g1 + g2 + g3 + low), so merging an image with itself under
    (max, avg) reproduces forward(model, image).re bit for bit.
    The result is not clamped; clamping belongs to save time.
    """
    _check_same_shape(ir, vi)
    d_ir = forward(model, ir, record_gradients=False)
    d_vi = forward(model, vi, record_gradients=False)
    g1 = fuse_high(d_vi.g1, d_ir.g1, strategy.high)
    g2 = fuse_high(d_vi.g2, d_ir.g2, strategy.high)
    g3 = fuse_high(d_vi.g3, d_ir.g3, strategy.high)
    low = fuse_low(d_vi.ups, d_ir.ups, strategy.low)
    return Tensor(g1.data + g2.data + g3.data + low.data)
