"""Grayscale image IO, resizing, and deterministic dataset iteration.

PGM (P5, maxval 255) is the canonical interchange format and is parsed
directly; PNG support (8-bit grayscale or RGB) goes through Pillow.
RGB collapses to one channel with luma weights 0.299/0.587/0.114.
Pixel values live in [0,1] as float32 throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np
from PIL import Image

from .errors import FormatError

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)
IMAGE_EXTENSIONS = (".pgm", ".png")


@dataclass
class ImageFile:
    """A decoded single-channel image with its source path."""
    path: str
    data: np.ndarray  # (h, w) float32 in [0,1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _parse_pgm(raw: bytes, path: str) -> np.ndarray:
    # Header tokens may be separated by arbitrary whitespace and
    # interleaved with '#' comment lines.
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: not a P5 PGM (magic {raw[:2]!r})")
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FormatError(f"{path}: truncated PGM header")
        try:
            tokens.append(int(raw[start:pos]))
        except ValueError:
            raise FormatError(
                f"{path}: bad PGM header token {raw[start:pos]!r}") from None
    pos += 1  # single whitespace byte after maxval
    w, h, maxval = tokens
    if w < 1 or h < 1:
        raise FormatError(f"{path}: bad PGM dimensions {w}x{h}")
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pixels = raw[pos:pos + w * h]
    if len(pixels) != w * h:
        raise FormatError(
            f"{path}: expected {w * h} pixel bytes, got {len(pixels)}")
    return np.frombuffer(pixels, dtype=np.uint8).reshape(h, w)


def _load_png(path: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            mode = im.mode
            if mode not in ("L", "RGB"):
                raise FormatError(
                    f"{path}: unsupported PNG mode {mode!r} (need 8-bit L or RGB)")
            arr = np.asarray(im, dtype=np.uint8)
    except FormatError:
        raise
    except Exception as exc:
        raise FormatError(f"{path}: cannot decode PNG ({exc})") from exc
    if arr.ndim == 3:
        rgb = arr.astype(np.float32)
        arr = (LUMA_WEIGHTS[0] * rgb[:, :, 0] + LUMA_WEIGHTS[1] * rgb[:, :, 1]
               + LUMA_WEIGHTS[2] * rgb[:, :, 2])
        return arr
    return arr.astype(np.float32)


def load_grayscale(path: str | Path) -> ImageFile:
    """Decode a PGM or PNG file to a [0,1] float image.

    Dispatch is on magic bytes, not extension.
    """
    path = str(path)
    try:
        with open(path, "rb") as f:
            raw = f.read()
    except OSError as exc:
        raise FormatError(f"{path}: cannot read ({exc})") from exc
    if raw[:2] == b"P5":
        gray = _parse_pgm(raw, path).astype(np.float32)
    elif raw[:8] == b"\x89PNG\r\n\x1a\n":
        gray = _load_png(path)
    else:
        raise FormatError(f"{path}: unrecognized image format")
    return ImageFile(path=path, data=(gray / 255.0).astype(np.float32))


def _resize_array(a: np.ndarray, height: int, width: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center coordinates and
    edge-clamped sampling."""
    h, w = a.shape
    if (h, w) == (height, width):
        return a.copy()
    src = a.astype(np.float64)

    def axis_coords(n_src: int, n_dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = (np.arange(n_dst) + 0.5) * (n_src / n_dst) - 0.5
        x = np.clip(x, 0.0, n_src - 1.0)
        i0 = np.floor(x).astype(np.int64)
        i1 = np.minimum(i0 + 1, n_src - 1)
        return i0, i1, x - i0

    r0, r1, fy = axis_coords(h, height)
    c0, c1, fx = axis_coords(w, width)
    top = src[r0][:, c0] * (1 - fx) + src[r0][:, c1] * fx
    bot = src[r1][:, c0] * (1 - fx) + src[r1][:, c1] * fx
    out = top * (1 - fy)[:, None] + bot * fy[:, None]
    return out.astype(np.float32)


def resize_bilinear(img: ImageFile | np.ndarray, height: int, width: int):
    """Resize an ImageFile (or bare 2-D array) to height x width."""
    if height < 1 or width < 1:
        raise ValueError(f"target size must be positive, got {height}x{width}")
    if isinstance(img, ImageFile):
        return ImageFile(path=img.path,
                         data=_resize_array(img.data, height, width))
    return _resize_array(np.asarray(img), height, width)


def quantize_to_bytes(a: np.ndarray) -> np.ndarray:
    return np.floor(np.clip(a, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def _to_2d(img) -> np.ndarray:
    a = np.asarray(getattr(img, "data", img))
    a = np.squeeze(a)
    if a.ndim != 2:
        raise ValueError(f"expected a single-channel image, got shape {a.shape}")
    return a


def save_image(img, path: str | Path) -> None:
    """Clamp to [0,1], quantize to 8 bits, write PGM (or PNG by
    extension)."""
    a = quantize_to_bytes(_to_2d(img))
    path = str(path)
    if path.lower().endswith(".png"):
        Image.fromarray(a, mode="L").save(path)
        return
    h, w = a.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(a.tobytes())


class DatasetIterator:
    """Deterministic shuffled batch stream over image files.

    The permutation for an epoch is a pure function of (seed, epoch).
    Files that fail to decode are logged, counted in `skipped`, and
    left out of the batch; decoded images are cached after resizing.
    """

    def __init__(self, paths: Sequence[str | Path], batch_size: int,
                 image_size: int, seed: int):
        if batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {batch_size}")
        self.paths = [str(p) for p in paths]
        if not self.paths:
            raise ValueError("dataset has no image files")
        self.batch_size = batch_size
        self.image_size = image_size
        self.seed = seed
        self.skipped = 0
        self._cache: dict[str, np.ndarray] = {}

    @classmethod
    def from_directory(cls, directory: str | Path, batch_size: int,
                       image_size: int, seed: int) -> "DatasetIterator":
        d = Path(directory)
        if not d.is_dir():
            raise FileNotFoundError(f"dataset directory {d} does not exist")
        paths = sorted(p for p in d.iterdir()
                       if p.suffix.lower() in IMAGE_EXTENSIONS)
        return cls(paths, batch_size, image_size, seed)

    def __len__(self) -> int:
        return len(self.paths)

    def _load(self, path: str) -> np.ndarray | None:
        cached = self._cache.get(path)
        if cached is not None:
            return cached
        try:
            img = load_grayscale(path)
        except FormatError as exc:
            logger.warning("skipping %s: %s", path, exc)
            self.skipped += 1
            return None
        data = _resize_array(img.data, self.image_size, self.image_size)
        self._cache[path] = data
        return data

    def batches(self, epoch: int) -> Iterator[np.ndarray]:
        """Yield (b,1,s,s) float32 batches; the last one may be short."""
        rng = np.random.default_rng(np.random.SeedSequence((self.seed, epoch)))
        order = rng.permutation(len(self.paths))
        pending: list[np.ndarray] = []
        for idx in order:
            data = self._load(self.paths[idx])
            if data is None:
                continue
            pending.append(data)
            if len(pending) == self.batch_size:
                yield np.stack(pending)[:, None, :, :]
                pending = []
        if pending:
            yield np.stack(pending)[:, None, :, :]
