"""Short training run on the bundled pairs, small enough for a laptop.

Trains the full three-part objective (gradient + adversarial +
reconstruction) on the four bundled images at 64x64 for a few hundred
generator steps and writes demo_runs/smoke/model.ckpt, which the other
demos pick up.  Expect a couple of minutes; pass a step count to
shorten or lengthen the run.
"""

import sys
import time
from pathlib import Path

from bandfuse.imgio import DatasetIterator
from bandfuse.network import build_model
from bandfuse.training import Discriminator, TrainConfig, train

ROOT = Path(__file__).resolve().parent.parent
OUT = ROOT / "demo_runs" / "smoke"


def main():
    steps = int(sys.argv[1]) if len(sys.argv) > 1 else 300
    batch = 2
    epochs = max(steps // 2, 1)  # four images, two batches per epoch
    config = TrainConfig(batch_size=batch, initial_lr=1e-3,
                         max_epochs=epochs, image_size=64, seed=0)
    dataset = DatasetIterator.from_directory(ROOT / "data" / "pairs",
                                             batch, config.image_size,
                                             config.seed)
    print(f"{len(dataset)} images, {epochs} epochs of 2 batches"
          f" ({2 * epochs} generator steps) at 64x64")

    model = build_model(config.seed)
    disc = Discriminator.build(config.seed + 1)
    OUT.mkdir(parents=True, exist_ok=True)

    t0 = time.perf_counter()
    history = train(model, disc, dataset, config, out_dir=OUT,
                    log_path=OUT / "train.log")
    wall = time.perf_counter() - t0

    print(f"\n{'epoch':>6} {'L_detail':>10} {'L_adv':>8} {'L_pix':>10}"
          f" {'L_ssim':>8} {'total':>10}")
    stride = max(len(history) // 10, 1)
    for s in history[::stride] + ([history[-1]] if len(history) % stride else []):
        print(f"{s.epoch:>6} {s.detail:>10.5f} {s.adv:>8.4f}"
              f" {s.pix:>10.6f} {s.ssim:>8.4f} {s.total:>10.5f}")

    first, last = history[0], history[-1]
    print(f"\npixel loss {first.pix:.6f} -> {last.pix:.6f}"
          f" ({first.pix / max(last.pix, 1e-12):.0f}x down)"
          f" in {wall:.1f}s")
    print(f"checkpoint written to {OUT / 'model.ckpt'}")


if __name__ == "__main__":
    main()
