"""Adam with bias correction and a reduce-on-plateau learning-rate rule."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import Tensor


class Adam:
    """Adam over an ordered parameter list.

    Moment buffers match each parameter's shape and dtype.  Parameters
    whose .grad is None at step() time are skipped; the shared step
    counter still advances once per call so bias correction stays in
    sync across parameters.
    """

    def __init__(self, params: Sequence[Tensor], lr: float,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        self.params = list(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        bc1 = 1.0 - b1 ** self.t
        bc2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self._m, self._v):
            g = p.grad
            if g is None:
                continue
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class PlateauScheduler:
    """Halve the lr after the improvement streak stalls too long.

    update() is called once per epoch with that epoch's mean loss.  A
    strict decrease over the best loss seen so far counts as improvement
    and resets the stall counter; once the counter exceeds `patience`
    consecutive stalled epochs the lr is multiplied by `factor` (floored
    at `min_lr`) and the counter restarts.
    """

    def __init__(self, lr: float, factor: float = 0.5, patience: int = 5,
                 min_lr: float = 1e-8):
        if lr <= 0:
            raise ValueError(f"lr must be positive, got {lr}")
        if not 0.0 < factor < 1.0:
            raise ValueError(f"factor must be in (0, 1), got {factor}")
        self.lr = float(lr)
        self.factor = float(factor)
        self.patience = int(patience)
        self.min_lr = float(min_lr)
        self.best: float | None = None
        self.stalled = 0

    def update(self, epoch_loss: float) -> float:
        loss = float(epoch_loss)
        if self.best is None or loss < self.best:
            self.best = loss
            self.stalled = 0
        else:
            self.stalled += 1
            if self.stalled > self.patience:
                self.lr = max(self.lr * self.factor, self.min_lr)
                self.stalled = 0
        return self.lr
