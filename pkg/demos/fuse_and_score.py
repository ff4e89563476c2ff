"""Fuse the bundled infrared/visible pairs and score the results.

Runs all four band-merge strategies on both bundled scenes, writes the
fused images, and prints the eight-metric table for the default
strategy plus a comparison of strategies on mean entropy and spatial
frequency.  Uses the train_smoke.py checkpoint when present.
"""

from pathlib import Path

from bandfuse.fusion import FusionStrategy, fuse_images
from bandfuse.imgio import load_grayscale, save_image
from bandfuse.metrics import METRIC_NAMES, report, write_csv
from bandfuse.network import build_model, load_checkpoint
from bandfuse.tensor import Tensor

ROOT = Path(__file__).resolve().parent.parent
CKPT = ROOT / "demo_runs" / "smoke" / "model.ckpt"
OUT = ROOT / "demo_runs" / "fused"
SCENES = ("camp", "road")


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    if CKPT.exists():
        model = load_checkpoint(CKPT)
        print(f"loaded trained weights from {CKPT}")
    else:
        model = build_model(seed=0)
        print("no smoke checkpoint found, using fresh weights")

    pairs = {}
    for scene in SCENES:
        ir = load_grayscale(ROOT / "data" / "pairs" / f"{scene}_ir.pgm")
        vi = load_grayscale(ROOT / "data" / "pairs" / f"{scene}_vi.pgm")
        pairs[scene] = (Tensor(ir.data[None, None]),
                        Tensor(vi.data[None, None]))

    strategies = [FusionStrategy(h, l) for h in ("max", "add")
                  for l in ("avg", "max")]
    summaries = {}
    for strategy in strategies:
        tag = f"{strategy.high}-{strategy.low}"
        triples = []
        for scene, (ir, vi) in pairs.items():
            fused = fuse_images(model, ir, vi, strategy)
            save_image(fused.data[0, 0], OUT / f"{scene}_{tag}.pgm")
            triples.append((ir.data[0, 0], vi.data[0, 0],
                            fused.data[0, 0].clip(0.0, 1.0)))
        rep = report(triples, names=list(pairs))
        summaries[tag] = rep
        csv_path = OUT / f"metrics_{tag}.csv"
        write_csv(rep, csv_path)

    default = summaries["max-avg"]
    print("\nmetrics for the default (high=max, low=avg) strategy:")
    header = "scene  " + "  ".join(f"{m:>7}" for m in METRIC_NAMES)
    print(header)
    for name, row in default.rows:
        print(f"{name:<6} " + "  ".join(f"{row[m]:>7.3f}" for m in METRIC_NAMES))
    print(f"{'mean':<6} " + "  ".join(f"{default.means[m]:>7.3f}"
                                      for m in METRIC_NAMES))

    print("\nstrategy comparison (means):")
    print(f"{'strategy':<10} {'EN':>7} {'SF':>8} {'SCD':>7}")
    for tag, rep in summaries.items():
        print(f"{tag:<10} {rep.means['EN']:>7.3f} {rep.means['SF']:>8.3f}"
              f" {rep.means['SCD']:>7.3f}")
    print(f"\nfused images and per-strategy CSVs written to {OUT}")


if __name__ == "__main__":
    main()
