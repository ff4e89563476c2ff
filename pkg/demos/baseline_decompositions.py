"""Classical decompositions on a bundled image: Haar DWT and Laplacian.

Runs the two reference transforms the learned network is compared
against, checks their defining identities, and writes viewable band
images to demo_runs/baselines/.
"""

from pathlib import Path

import numpy as np

from bandfuse.baselines import haar_dwt2, haar_idwt2, laplacian_filter
from bandfuse.imgio import load_grayscale, save_image
from bandfuse.tensor import Tensor

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "demo_runs" / "baselines"


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    img = load_grayscale(ROOT / "data" / "pairs" / "camp_vi.pgm")
    x = Tensor(img.data[None, None])
    print(f"input: {img.path} ({img.height}x{img.width})")

    print("\n-- single-level Haar DWT --")
    bands = haar_dwt2(x)
    for name in ("ll", "lh", "hl", "hh"):
        band = getattr(bands, name).data
        print(f"{name}: shape {band.shape[2:]}, energy {float((band**2).sum()):.2f}")
    total = sum(float((getattr(bands, n).data ** 2).sum())
                for n in ("ll", "lh", "hl", "hh"))
    print(f"energy in bands {total:.2f} vs input {float((x.data**2).sum()):.2f}"
          " (orthonormal: equal)")
    back = haar_idwt2(bands)
    err = float(np.max(np.abs(back.data - x.data)))
    print(f"reconstruction max error {err:.2e}")
    save_image(bands.ll.data[0, 0] / 2.0, OUT / "haar_ll.pgm")
    for name in ("lh", "hl", "hh"):
        detail = getattr(bands, name).data[0, 0]
        save_image(detail / 2.0 + 0.5, OUT / f"haar_{name}.pgm")

    print("\n-- Laplacian filters --")
    for kernel in ("g1", "g2"):
        resp = laplacian_filter(x, kernel).data[0, 0]
        print(f"{kernel}: response range [{resp.min():.3f}, {resp.max():.3f}],"
              f" mean magnitude {np.abs(resp).mean():.4f}")
        save_image(resp / 2.0 + 0.5, OUT / f"laplacian_{kernel}.pgm")

    print(f"\nband images written to {OUT}")


if __name__ == "__main__":
    main()
