"""Command-line interface: train, decompose, fuse, evaluate.

Exit codes: 0 success, 2 usage/config/data error, 3 numeric failure
during training.  A key=value config file can prefill training options;
explicit flags win over file values.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import baselines, metrics
from .errors import ConfigError, FormatError, NumericError, ShapeError
from .fusion import FusionStrategy, fuse_images
from .imgio import DatasetIterator, load_grayscale, save_image
from .network import build_model, forward, load_checkpoint
from .tensor import Tensor
from .training import Discriminator, LossWeights, TrainConfig, train

# config file keys -> (TrainConfig target, parser)
_CONFIG_KEYS = {
    "data": str,
    "out": str,
    "epochs": int,
    "batch": int,
    "seed": int,
    "lr": float,
    "disc_lr": float,
    "lambda1": float,
    "lambda2": float,
    "lambda3": float,
    "image_size": int,
    "checkpoint_interval": int,
}


def parse_config_file(path: str | Path) -> dict:
    """Parse key=value lines; '#' starts a comment; unknown keys are
    errors so typos surface instead of silently using defaults."""
    values: dict = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(
                f"{path}:{lineno}: expected key=value, got {stripped!r}")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        try:
            values[key] = _CONFIG_KEYS[key](raw)
        except ValueError:
            raise ConfigError(
                f"{path}:{lineno}: bad value {raw!r} for {key!r}") from None
    return values


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bandfuse",
        description="Frequency-band image decomposition and IR/VIS fusion")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the decomposition network")
    p_train.add_argument("--config", help="key=value config file")
    p_train.add_argument("--data", help="directory of training images")
    p_train.add_argument("--out", help="output directory (default .)")
    p_train.add_argument("--epochs", type=int)
    p_train.add_argument("--batch", type=int)
    p_train.add_argument("--seed", type=int)
    p_train.add_argument("--lr", type=float)
    p_train.add_argument("--lambda1", type=float, help="adversarial weight")
    p_train.add_argument("--lambda2", type=float, help="pixel weight")
    p_train.add_argument("--lambda3", type=float, help="SSIM weight")

    p_dec = sub.add_parser("decompose",
                           help="split one image into band images")
    p_dec.add_argument("--checkpoint", required=True)
    p_dec.add_argument("--out", required=True, help="output directory")
    p_dec.add_argument("--baseline", choices=["laplacian"],
                       help="also write classical filter responses")
    p_dec.add_argument("image")

    p_fuse = sub.add_parser("fuse", help="fuse an infrared/visible pair")
    p_fuse.add_argument("--checkpoint", required=True)
    p_fuse.add_argument("--high", choices=["max", "add"], default="max")
    p_fuse.add_argument("--low", choices=["avg", "max"], default="avg")
    p_fuse.add_argument("--out", required=True, help="fused image path")
    p_fuse.add_argument("ir")
    p_fuse.add_argument("vi")

    p_eval = sub.add_parser("evaluate",
                            help="score *_ir/*_vi/*_fused triples in a directory")
    p_eval.add_argument("--out", help="CSV path (default: stdout)")
    p_eval.add_argument("directory")
    return parser


def _train_settings(args) -> dict:
    values = parse_config_file(args.config) if args.config else {}
    overrides = {
        "data": args.data, "out": args.out, "epochs": args.epochs,
        "batch": args.batch, "seed": args.seed, "lr": args.lr,
        "lambda1": args.lambda1, "lambda2": args.lambda2,
        "lambda3": args.lambda3,
    }
    for key, val in overrides.items():
        if val is not None:
            values[key] = val
    return values


def cmd_train(args) -> int:
    values = _train_settings(args)
    if "data" not in values:
        raise ConfigError("no dataset directory (use --data or config 'data')")
    try:
        weights = LossWeights(adv=values.get("lambda1", 0.1),
                              pix=values.get("lambda2", 100.0),
                              ssim=values.get("lambda3", 10.0))
        config = TrainConfig(
            batch_size=values.get("batch", 64),
            initial_lr=values.get("lr", 1e-3),
            disc_lr=values.get("disc_lr", values.get("lr", 1e-3)),
            max_epochs=values.get("epochs", 1000),
            image_size=values.get("image_size", 256),
            seed=values.get("seed", 0),
            data_dir=values["data"],
            weights=weights,
            checkpoint_interval=values.get("checkpoint_interval", 0),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    dataset = DatasetIterator.from_directory(
        config.data_dir, config.batch_size, config.image_size, config.seed)
    if len(dataset) == 0:
        raise ConfigError(f"no images found in {config.data_dir}")
    out_dir = Path(values.get("out", "."))
    model = build_model(config.seed)
    disc = Discriminator.build(config.seed + 1)
    out_dir.mkdir(parents=True, exist_ok=True)
    train(model, disc, dataset, config, out_dir=out_dir,
          log_path=out_dir / "train.log")
    return 0


def _load_input(path: str) -> Tensor:
    img = load_grayscale(path)
    return Tensor(img.data[None, None, :, :])


_REMAP_NOTE = """\
g1.pgm, g2.pgm, g3.pgm: signed high-frequency values remapped for
viewing as pixel = (value + 1) / 2, then clamped to [0,1].
s.pgm, ups.pgm, re.pgm: clamped to [0,1] directly.
"""

_REMAP_NOTE_BASELINE = """\
lap_g1.pgm, lap_g2.pgm: Laplacian filter responses, same remap as g*.
"""


def cmd_decompose(args) -> int:
    model = load_checkpoint(args.checkpoint)
    x = _load_input(args.image)
    dec = forward(model, x, record_gradients=False)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, t in (("g1", dec.g1), ("g2", dec.g2), ("g3", dec.g3)):
        save_image((t.data[0, 0] + 1.0) / 2.0, out / f"{name}.pgm")
    for name, t in (("s", dec.s), ("ups", dec.ups), ("re", dec.re)):
        save_image(t.data[0, 0], out / f"{name}.pgm")
    note = _REMAP_NOTE
    if args.baseline == "laplacian":
        for name, kernel in (("lap_g1", "g1"), ("lap_g2", "g2")):
            resp = baselines.laplacian_filter(x, kernel)
            save_image((resp.data[0, 0] + 1.0) / 2.0, out / f"{name}.pgm")
        note += _REMAP_NOTE_BASELINE
    (out / "remap.txt").write_text(note)
    return 0


def cmd_fuse(args) -> int:
    model = load_checkpoint(args.checkpoint)
    ir = _load_input(args.ir)
    vi = _load_input(args.vi)
    if ir.data.shape != vi.data.shape:
        raise ShapeError(
            f"image sizes differ: {ir.data.shape[2:]} vs {vi.data.shape[2:]}")
    strategy = FusionStrategy(high=args.high, low=args.low)
    fused = fuse_images(model, ir, vi, strategy)
    out = Path(args.out)
    if out.parent and not out.parent.exists():
        out.parent.mkdir(parents=True, exist_ok=True)
    save_image(fused.data[0, 0], out)
    scores = metrics.evaluate_triple(ir.data[0, 0], vi.data[0, 0],
                                     fused.data[0, 0])
    for name in metrics.METRIC_NAMES:
        print(f"{name}\t{scores[name]:.4f}")
    return 0


def _find_triples(directory: Path) -> list[tuple[str, Path, Path, Path]]:
    triples = []
    ir_files = sorted(p for p in directory.iterdir()
                      if p.stem.endswith("_ir") and p.suffix.lower() in (".pgm", ".png"))
    for ir_path in ir_files:
        stem = ir_path.stem[:-3]
        vi = [directory / f"{stem}_vi{ext}" for ext in (".pgm", ".png")]
        fused = [directory / f"{stem}_fused{ext}" for ext in (".pgm", ".png")]
        vi_path = next((p for p in vi if p.exists()), None)
        fused_path = next((p for p in fused if p.exists()), None)
        if vi_path is None or fused_path is None:
            print(f"warning: skipping {stem!r}: incomplete triple",
                  file=sys.stderr)
            continue
        triples.append((stem, ir_path, vi_path, fused_path))
    return triples


def cmd_evaluate(args) -> int:
    directory = Path(args.directory)
    if not directory.is_dir():
        raise ConfigError(f"{directory} is not a directory")
    triples = _find_triples(directory)
    if not triples:
        raise ConfigError(
            f"no complete <name>_ir/<name>_vi/<name>_fused triples in {directory}")
    names = [t[0] for t in triples]
    arrays = [(load_grayscale(ir).data, load_grayscale(vi).data,
               load_grayscale(fused).data)
              for _, ir, vi, fused in triples]
    rep = metrics.report(arrays, names=names)
    if args.out:
        metrics.write_csv(rep, args.out)
    else:
        metrics.write_csv(rep, sys.stdout)
    return 0


_COMMANDS = {
    "train": cmd_train,
    "decompose": cmd_decompose,
    "fuse": cmd_fuse,
    "evaluate": cmd_evaluate,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code else 0
    try:
        return _COMMANDS[args.command](args)
    except NumericError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ConfigError, FormatError, ShapeError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
