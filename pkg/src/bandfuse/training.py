"""Loss functions, the LSGAN discriminator, and the training loop.

The generator objective has three parts: a gradient loss pulling each
high-frequency image toward the Laplacian response of the source, a
least-squares adversarial loss pushing the semantic image toward the
distribution of downsampled source images, and a reconstruction loss
(pixel MSE plus structural dissimilarity) tying the band sum back to
the source.  Discriminator and generator alternate one Adam step each
per batch; a plateau rule decays the learning rate between epochs.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .baselines import LAPLACIAN_G2
from .errors import NumericError, ShapeError
from .network import (DecompositionModel, Decomposition, forward, init_conv,
                      save_checkpoint)
from .optim import Adam, PlateauScheduler
from .tensor import (ConvParams, Tensor, _conv_forward, avg_pool, box_mean,
                     collect_parameters, conv2d, leaky_relu, mean, mse,
                     spatial_mean)

SSIM_WINDOW = 8
_SSIM_C1 = (0.01 * 1.0) ** 2  # data range treated as 1.0
_SSIM_C2 = (0.03 * 1.0) ** 2


@dataclass
class LossWeights:
    """Balance factors for the adversarial, pixel, and SSIM terms."""
    adv: float = 0.1
    pix: float = 100.0
    ssim: float = 10.0

    def __post_init__(self):
        for name in ("adv", "pix", "ssim"):
            if getattr(self, name) < 0:
                raise ValueError(f"loss weight {name} must be nonnegative")


@dataclass
class TrainConfig:
    batch_size: int = 64
    initial_lr: float = 1e-3
    disc_lr: float = 1e-3
    max_epochs: int = 1000
    image_size: int = 256
    seed: int = 0
    data_dir: str | None = None
    weights: LossWeights = field(default_factory=LossWeights)
    checkpoint_interval: int = 0  # 0 = final checkpoint only

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.image_size % 4:
            raise ValueError(
                f"image_size must be divisible by 4, got {self.image_size}")
        if self.max_epochs < 1:
            raise ValueError(f"max_epochs must be >= 1, got {self.max_epochs}")


def laplacian_target(image: Tensor) -> Tensor:
    """8-neighbor Laplacian response of the source; a fixed regression
    target, so never tape-recorded."""
    x = image.data
    if x.ndim != 4 or x.shape[1] != 1:
        raise ShapeError(f"expected (n,1,h,w), got {image.shape}")
    k = LAPLACIAN_G2.astype(x.dtype).reshape(1, 1, 3, 3)
    return Tensor(_conv_forward(x, k, 1, 1))


def detail_loss(decomp: Decomposition, target: Tensor) -> Tensor:
    """Sum of per-branch MSEs against the shared Laplacian target."""
    return (mse(target, decomp.g1) + mse(target, decomp.g2)
            + mse(target, decomp.g3))


def ssim(x: Tensor, y: Tensor, window: int = SSIM_WINDOW) -> Tensor:
    """Mean local structural similarity over sliding uniform windows.

    Local statistics use the biased (population) variance.  The result
    is a differentiable scalar in [-1, 1].
    """
    if x.data.shape != y.data.shape:
        raise ShapeError(f"ssim shape mismatch {x.shape} vs {y.shape}")
    if x.data.ndim != 4:
        raise ShapeError(f"ssim expects 4-D input, got {x.shape}")
    h, w = x.data.shape[2], x.data.shape[3]
    if h < window or w < window:
        raise ShapeError(f"image {h}x{w} smaller than ssim window {window}")
    mu_x = box_mean(x, window)
    mu_y = box_mean(y, window)
    var_x = box_mean(x * x, window) - mu_x * mu_x
    var_y = box_mean(y * y, window) - mu_y * mu_y
    cov = box_mean(x * y, window) - mu_x * mu_y
    num = (2.0 * (mu_x * mu_y) + _SSIM_C1) * (2.0 * cov + _SSIM_C2)
    den = (mu_x * mu_x + mu_y * mu_y + _SSIM_C1) * (var_x + var_y + _SSIM_C2)
    return mean(num / den)


def reconstruction_loss(re: Tensor, ori: Tensor) -> tuple[Tensor, Tensor]:
    """(pixel MSE, 1 - SSIM), returned separately so each gets its own
    weight in the total."""
    if re.data.shape != ori.data.shape:
        raise ShapeError(f"shape mismatch {re.shape} vs {ori.shape}")
    l_pix = mse(ori, re)
    l_ssim = 1.0 - ssim(ori, re)
    return l_pix, l_ssim


def downsample_reference(image: Tensor) -> Tensor:
    """Quarter-resolution reference for the discriminator: two 2x2
    average-pooling stages."""
    h, w = image.data.shape[2], image.data.shape[3]
    if h % 4 or w % 4:
        raise ShapeError(
            f"spatial size {h}x{w} must be divisible by 4 to downsample twice")
    return avg_pool(avg_pool(image, 2), 2)


DISC_LAYER_SPECS: list[tuple[str, int, int, int, int, str]] = [
    ("disc.0", 1, 16, 3, 2, "lrelu"),
    ("disc.1", 16, 32, 3, 2, "lrelu"),
    ("disc.2", 32, 64, 3, 2, "lrelu"),
    ("disc.3", 64, 1, 1, 1, "none"),
]


class Discriminator:
    """Small strided critic over quarter-resolution images.

    Three stride-2 convs, a 1x1 projection, then a global spatial mean;
    the output is one raw (un-squashed) score per batch item, as the
    least-squares objective requires.
    """

    def __init__(self, layers: dict[str, ConvParams]):
        missing = [name for name, *_ in DISC_LAYER_SPECS if name not in layers]
        if missing:
            raise ShapeError(f"discriminator missing layers: {missing}")
        self.layers = {name: layers[name] for name, *_ in DISC_LAYER_SPECS}

    @classmethod
    def build(cls, seed: int, dtype=np.float32) -> "Discriminator":
        rng = np.random.default_rng(seed)
        layers = {}
        for name, cin, cout, k, stride, _act in DISC_LAYER_SPECS:
            layers[name] = init_conv(rng, cout, cin, k, stride, dtype=dtype)
        return cls(layers)

    @classmethod
    def from_table(cls, table: dict[str, tuple[np.ndarray, np.ndarray]]
                   ) -> "Discriminator":
        layers = {}
        for name, cin, cout, k, stride, _act in DISC_LAYER_SPECS:
            if name not in table:
                raise ShapeError(f"layer table is missing {name!r}")
            w, b = table[name]
            if w.shape != (cout, cin, k, k):
                raise ShapeError(
                    f"layer {name!r} has shape {w.shape}, expected {(cout, cin, k, k)}")
            layers[name] = ConvParams(Tensor(w, requires_grad=True),
                                      Tensor(b, requires_grad=True),
                                      stride=stride)
        return cls(layers)

    def __call__(self, x: Tensor) -> Tensor:
        out = x
        for name, _cin, _cout, _k, _stride, act in DISC_LAYER_SPECS:
            out = conv2d(out, self.layers[name])
            if act == "lrelu":
                out = leaky_relu(out, 0.2)
        return spatial_mean(out)

    def parameters(self) -> list[Tensor]:
        return collect_parameters(self.layers.values())

    def layer_table(self) -> dict[str, ConvParams]:
        return dict(self.layers)


def adversarial_losses(d: Discriminator, i_s: Tensor, i_down: Tensor
                       ) -> tuple[Tensor, Tensor]:
    """Least-squares GAN pair (L_G, L_D).

    L_G drives D(i_s) toward 1 and reaches the generator through i_s.
    L_D drives D(i_down) toward 1 and D(i_s) toward 0, with i_s
    detached so no gradient leaks back to the generator.
    """
    if i_s.data.shape != i_down.data.shape:
        raise ShapeError(
            f"shape mismatch {i_s.shape} vs {i_down.shape}")
    one = Tensor(np.ones((i_s.data.shape[0], 1, 1, 1), dtype=i_s.dtype))
    zero = Tensor(np.zeros_like(one.data))
    l_g = mse(d(i_s), one)
    l_d = mse(d(i_down), one) + mse(d(i_s.detach()), zero)
    return l_g, l_d


def total_generator_loss(l_detail: Tensor, l_adv: Tensor | None,
                         l_pix: Tensor, l_ssim: Tensor,
                         weights: LossWeights) -> Tensor:
    total = l_detail + weights.pix * l_pix + weights.ssim * l_ssim
    if l_adv is not None:
        total = total + weights.adv * l_adv
    return total


@dataclass
class EpochStats:
    epoch: int
    lr: float
    detail: float
    adv: float
    pix: float
    ssim: float
    total: float
    wall_seconds: float


def format_log_line(s: EpochStats) -> str:
    return (f"{s.epoch}\t{s.lr:.8e}\t{s.detail:.8e}\t{s.adv:.8e}"
            f"\t{s.pix:.8e}\t{s.ssim:.8e}\t{s.total:.8e}"
            f"\t{s.wall_seconds:.3f}")


def _check_finite(name: str, value: float) -> float:
    if not np.isfinite(value):
        raise NumericError(f"loss component {name!r} became non-finite ({value})")
    return value


def train(model: DecompositionModel, discriminator: Discriminator, dataset,
          config: TrainConfig, out_dir: str | Path | None = None,
          log_path: str | Path | None = None) -> list[EpochStats]:
    """Run the adversarial training loop.

    `dataset` must provide batches(epoch) yielding (b,1,s,s) float
    arrays in [0,1].  With weights.adv == 0 the discriminator is never
    evaluated or updated (ablation mode).  Checkpoints land in out_dir
    ("model.ckpt", plus "epoch_NNNN.ckpt" at the configured interval)
    with discriminator layers stored alongside.  Deterministic given
    the config seed: same inputs, bit-identical parameters and losses.

    The plateau rule watches the mean generator total loss per epoch;
    the decayed rate applies to both optimizers, preserving their
    initial ratio.
    """
    weights = config.weights
    use_adv = weights.adv != 0.0
    g_opt = Adam(model.parameters(), lr=config.initial_lr)
    d_opt = Adam(discriminator.parameters(), lr=config.disc_lr)
    sched = PlateauScheduler(config.initial_lr)
    lr_ratio = config.disc_lr / config.initial_lr
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
    log_f = open(log_path, "w") if log_path is not None else None
    history: list[EpochStats] = []
    try:
        for epoch in range(1, config.max_epochs + 1):
            t0 = time.perf_counter()
            lr_now = sched.lr
            sums = {"detail": 0.0, "adv": 0.0, "pix": 0.0, "ssim": 0.0,
                    "total": 0.0}
            n_batches = 0
            for batch in dataset.batches(epoch):
                x = Tensor(batch)
                target = laplacian_target(x)
                dec = forward(model, x, record_gradients=True)
                l_detail = detail_loss(dec, target)
                l_pix, l_ssim = reconstruction_loss(dec.re, x)
                l_adv = None
                if use_adv:
                    # Split-phase version of adversarial_losses: critic
                    # step first, then the generator term against the
                    # just-updated critic.
                    i_down = downsample_reference(x)
                    real = discriminator(i_down)
                    ones = Tensor(np.ones_like(real.data))
                    zeros = Tensor(np.zeros_like(real.data))
                    l_d = (mse(real, ones)
                           + mse(discriminator(dec.s.detach()), zeros))
                    _check_finite("L_disc", l_d.item())
                    d_opt.zero_grad()
                    l_d.backward()
                    d_opt.step()
                    l_adv = mse(discriminator(dec.s), ones)
                total = total_generator_loss(l_detail, l_adv, l_pix, l_ssim,
                                             weights)
                parts = {
                    "L_detail": l_detail.item(),
                    "L_adv": l_adv.item() if l_adv is not None else 0.0,
                    "L_pix": l_pix.item(),
                    "L_ssim": l_ssim.item(),
                    "total": total.item(),
                }
                for name, value in parts.items():
                    _check_finite(name, value)
                g_opt.zero_grad()
                total.backward()
                g_opt.step()
                sums["detail"] += parts["L_detail"]
                sums["adv"] += parts["L_adv"]
                sums["pix"] += parts["L_pix"]
                sums["ssim"] += parts["L_ssim"]
                sums["total"] += parts["total"]
                n_batches += 1
            if n_batches == 0:
                raise ValueError("dataset produced no batches")
            stats = EpochStats(
                epoch=epoch, lr=lr_now,
                detail=sums["detail"] / n_batches,
                adv=sums["adv"] / n_batches,
                pix=sums["pix"] / n_batches,
                ssim=sums["ssim"] / n_batches,
                total=sums["total"] / n_batches,
                wall_seconds=time.perf_counter() - t0)
            history.append(stats)
            if log_f is not None:
                log_f.write(format_log_line(stats) + "\n")
                log_f.flush()
            new_lr = sched.update(stats.total)
            g_opt.lr = new_lr
            d_opt.lr = new_lr * lr_ratio
            if (out_dir is not None and config.checkpoint_interval > 0
                    and epoch % config.checkpoint_interval == 0):
                save_checkpoint(model, out_dir / f"epoch_{epoch:04d}.ckpt",
                                extra_layers=discriminator.layer_table())
        if out_dir is not None:
            save_checkpoint(model, out_dir / "model.ckpt",
                            extra_layers=discriminator.layer_table())
    finally:
        if log_f is not None:
            log_f.close()
    return history
