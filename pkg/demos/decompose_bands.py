"""Push a bundled image through the decomposition network.

Uses the checkpoint from train_smoke.py when it exists (run that demo
first for sensible bands), otherwise freshly-initialized weights.
Prints per-band statistics, verifies that the four bands sum exactly to
the reconstruction, and writes viewable images.
"""

from pathlib import Path

import numpy as np

from bandfuse.imgio import load_grayscale, save_image
from bandfuse.network import build_model, forward, load_checkpoint
from bandfuse.tensor import Tensor

ROOT = Path(__file__).resolve().parent.parent
CKPT = ROOT / "demo_runs" / "smoke" / "model.ckpt"
OUT = ROOT / "demo_runs" / "bands"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    if CKPT.exists():
        model = load_checkpoint(CKPT)
        print(f"loaded trained weights from {CKPT}")
    else:
        model = build_model(seed=0)
        print("no smoke checkpoint found, using fresh weights"
              " (run train_smoke.py first for trained bands)")
    print(f"parameters: {model.parameter_count()}")

    img = load_grayscale(ROOT / "data" / "pairs" / "road_ir.pgm")
    dec = forward(model, Tensor(img.data[None, None]))

    print(f"\ninput {img.height}x{img.width} -> bands:")
    for name in ("g1", "g2", "g3", "s", "ups", "re"):
        band = getattr(dec, name).data
        print(f"  {name}: {str(band.shape[2:]):>12}  "
              f"range [{band.min():+.3f}, {band.max():+.3f}]")

    band_sum = dec.g1.data + dec.g2.data + dec.g3.data + dec.ups.data
    gap = float(np.max(np.abs(dec.re.data - band_sum)))
    print(f"\nmax |re - (g1+g2+g3+ups)| = {gap} (additive by construction)")
    err = float(np.mean((dec.re.data[0, 0] - img.data) ** 2))
    print(f"reconstruction MSE vs input: {err:.6f}")

    for name in ("g1", "g2", "g3"):
        save_image((getattr(dec, name).data[0, 0] + 1.0) / 2.0,
                   OUT / f"{name}.pgm")
    for name in ("s", "ups", "re"):
        save_image(getattr(dec, name).data[0, 0], OUT / f"{name}.pgm")
    print(f"band images written to {OUT}")


if __name__ == "__main__":
    main()
