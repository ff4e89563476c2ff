"""The decomposition network: construction, forward pass, checkpoints.

One grayscale batch goes in, four images come out: three signed
high-frequency images (g1, g2, g3) tapped at increasing backbone depth,
and one low-frequency image (ups) produced by a strided semantic head
and upsampled back to input size.  Their pixelwise sum is the
reconstruction (re).

The detail head that turns each backbone tap into a high-frequency
image is a single parameter set shared by all three branches, so its
gradients accumulate across branches during training.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .errors import FormatError, ShapeError
from .tensor import (ConvParams, Tensor, conv2d, leaky_relu, no_grad, relu,
                     tanh, upsample_nearest)

# name, in channels, out channels, kernel, stride, activation
LAYER_SPECS: list[tuple[str, int, int, int, int, str]] = [
    ("cin.0", 1, 16, 3, 1, "lrelu"),
    ("cin.1", 16, 32, 3, 1, "lrelu"),
    ("cin.2", 32, 64, 3, 1, "lrelu"),
    ("c1", 64, 64, 3, 1, "lrelu"),
    ("c2", 64, 64, 3, 1, "lrelu"),
    ("c3", 64, 64, 3, 1, "lrelu"),
    ("r1", 64, 64, 1, 1, "none"),
    ("r2", 64, 64, 1, 1, "none"),
    ("r3", 64, 64, 1, 1, "none"),
    ("detail.0", 64, 32, 3, 1, "lrelu"),
    ("detail.1", 32, 16, 3, 1, "lrelu"),
    ("detail.2", 16, 1, 3, 1, "tanh"),
    ("cres.0", 64, 64, 3, 1, "relu"),
    ("cres.1", 64, 64, 3, 1, "relu"),
    ("cres.2", 64, 64, 3, 1, "relu"),
    ("semantic.0", 64, 32, 3, 2, "relu"),
    ("semantic.1", 32, 16, 3, 2, "relu"),
    ("semantic.2", 16, 1, 3, 1, "tanh"),
]

_ACTIVATIONS = {
    "lrelu": lambda t: leaky_relu(t, 0.2),
    "relu": relu,
    "tanh": tanh,
    "none": lambda t: t,
}

CHECKPOINT_MAGIC = b"DDNF"
CHECKPOINT_VERSION = 1


def init_conv(rng: np.random.Generator, out_ch: int, in_ch: int, k: int,
              stride: int = 1, dtype=np.float32) -> ConvParams:
    """Fan-in-scaled uniform weights, zero bias."""
    bound = np.sqrt(6.0 / (in_ch * k * k))
    w = rng.uniform(-bound, bound, size=(out_ch, in_ch, k, k)).astype(dtype)
    b = np.zeros(out_ch, dtype=dtype)
    return ConvParams(Tensor(w, requires_grad=True),
                      Tensor(b, requires_grad=True), stride=stride)


class DecompositionModel:
    """Holds the layer table; `detail` is shared by all three branches."""

    upsample_factor = 4

    def __init__(self, layers: dict[str, ConvParams]):
        missing = [name for name, *_ in LAYER_SPECS if name not in layers]
        if missing:
            raise ShapeError(f"model is missing layers: {missing}")
        self.layers = {name: layers[name] for name, *_ in LAYER_SPECS}
        self.cin = [self.layers[f"cin.{i}"] for i in range(3)]
        self.c1, self.c2, self.c3 = (self.layers[n] for n in ("c1", "c2", "c3"))
        self.r1, self.r2, self.r3 = (self.layers[n] for n in ("r1", "r2", "r3"))
        self.detail = [self.layers[f"detail.{i}"] for i in range(3)]
        self.cres = [self.layers[f"cres.{i}"] for i in range(3)]
        self.semantic = [self.layers[f"semantic.{i}"] for i in range(3)]

    def parameters(self) -> list[Tensor]:
        out: list[Tensor] = []
        for name, *_ in LAYER_SPECS:
            out.extend(self.layers[name].parameters())
        return out

    def parameter_count(self) -> int:
        return sum(p.data.size for p in self.parameters())


def build_model(seed: int, dtype=np.float32) -> DecompositionModel:
    """Deterministic construction; same seed gives bit-identical weights."""
    rng = np.random.default_rng(seed)
    layers = {}
    for name, cin, cout, k, stride, _act in LAYER_SPECS:
        layers[name] = init_conv(rng, cout, cin, k, stride, dtype=dtype)
    return DecompositionModel(layers)


@dataclass
class Decomposition:
    """Network outputs: three high-frequency images, the low-resolution
    semantic image, its upsampled version, and their sum."""
    g1: Tensor
    g2: Tensor
    g3: Tensor
    s: Tensor
    ups: Tensor
    re: Tensor


def _apply(params: ConvParams, act: str, x: Tensor) -> Tensor:
    return _ACTIVATIONS[act](conv2d(x, params))


def forward(model: DecompositionModel, image: Tensor,
            record_gradients: bool = True) -> Decomposition:
    """Run the decomposition on a (n,1,h,w) batch with values in [0,1]."""
    if image.data.ndim != 4 or image.data.shape[1] != 1:
        raise ShapeError(f"input must be (n,1,h,w), got {image.shape}")
    h, w = image.data.shape[2], image.data.shape[3]
    if h % 4 or w % 4:
        raise ShapeError(
            f"input spatial size {h}x{w} must be divisible by 4 "
            "(two stride-2 layers feed a factor-4 upsample)")
    if record_gradients:
        return _forward(model, image)
    with no_grad():
        return _forward(model, image)


def _forward(model: DecompositionModel, image: Tensor) -> Decomposition:
    x = image
    for layer in model.cin:
        x = _apply(layer, "lrelu", x)
    f0 = x
    f1 = _apply(model.c1, "lrelu", f0)
    f2 = _apply(model.c2, "lrelu", f1)
    f3 = _apply(model.c3, "lrelu", f2)

    # One detail head, applied three times: gradients from every branch
    # land on the same parameters.
    def detail_head(feat: Tensor) -> Tensor:
        d = _apply(model.detail[0], "lrelu", feat)
        d = _apply(model.detail[1], "lrelu", d)
        return _apply(model.detail[2], "tanh", d)

    g1 = detail_head(conv2d(f1, model.r1))
    g2 = detail_head(conv2d(f2, model.r2))
    g3 = detail_head(conv2d(f3, model.r3))

    res = f0
    for layer in model.cres:
        res = _apply(layer, "relu", res)
    sem = f3 + res
    sem = _apply(model.semantic[0], "relu", sem)
    sem = _apply(model.semantic[1], "relu", sem)
    s = _apply(model.semantic[2], "tanh", sem)
    ups = upsample_nearest(s, model.upsample_factor)
    re = g1 + g2 + g3 + ups
    return Decomposition(g1=g1, g2=g2, g3=g3, s=s, ups=ups, re=re)


# -- checkpoint serialization ----------------------------------------------

def _write_record(f: BinaryIO, name: str, params: ConvParams) -> None:
    raw = name.encode("utf-8")
    f.write(struct.pack("<H", len(raw)))
    f.write(raw)
    o, c, kh, kw = params.weight.data.shape
    f.write(struct.pack("<4I", o, c, kh, kw))
    f.write(np.ascontiguousarray(params.weight.data, dtype="<f4").tobytes())
    f.write(np.ascontiguousarray(params.bias.data, dtype="<f4").tobytes())


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise FormatError(f"checkpoint truncated while reading {what}")
    return buf


def save_checkpoint(model: DecompositionModel, path,
                    extra_layers: dict[str, ConvParams] | None = None) -> None:
    """Write the layer table; extra_layers (e.g. a discriminator) follow
    the model records under their own names."""
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<H", CHECKPOINT_VERSION))
        for name, *_ in LAYER_SPECS:
            _write_record(f, name, model.layers[name])
        for name, params in (extra_layers or {}).items():
            _write_record(f, name, params)


def read_layer_table(path) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Parse a checkpoint into {name: (weight, bias)} float32 arrays."""
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != CHECKPOINT_MAGIC:
            raise FormatError(f"bad magic {magic!r}, expected {CHECKPOINT_MAGIC!r}")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
        if version != CHECKPOINT_VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        table: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        while True:
            head = f.read(2)
            if not head:
                break
            if len(head) != 2:
                raise FormatError("checkpoint truncated while reading name length")
            (nlen,) = struct.unpack("<H", head)
            name = _read_exact(f, nlen, "layer name").decode("utf-8")
            o, c, kh, kw = struct.unpack("<4I", _read_exact(f, 16, f"shape of {name!r}"))
            wbytes = _read_exact(f, 4 * o * c * kh * kw, f"weights of {name!r}")
            bbytes = _read_exact(f, 4 * o, f"bias of {name!r}")
            w = np.frombuffer(wbytes, dtype="<f4").reshape(o, c, kh, kw).copy()
            b = np.frombuffer(bbytes, dtype="<f4").copy()
            if name in table:
                raise FormatError(f"duplicate layer record {name!r}")
            table[name] = (w, b)
    return table


def load_checkpoint(path) -> DecompositionModel:
    """Rebuild a model from a checkpoint; shapes are validated per layer.

    Records outside the model's layer table (discriminator state saved
    alongside) are ignored here; read_layer_table exposes them.
    """
    table = read_layer_table(path)
    layers: dict[str, ConvParams] = {}
    for name, cin, cout, k, stride, _act in LAYER_SPECS:
        if name not in table:
            raise FormatError(f"checkpoint is missing layer {name!r}")
        w, b = table[name]
        if w.shape != (cout, cin, k, k):
            raise FormatError(
                f"layer {name!r} has shape {w.shape}, expected {(cout, cin, k, k)}")
        layers[name] = ConvParams(Tensor(w, requires_grad=True),
                                  Tensor(b, requires_grad=True), stride=stride)
    for name in table:
        if name not in layers and not name.startswith("disc."):
            raise FormatError(f"unknown layer record {name!r}")
    return DecompositionModel(layers)
