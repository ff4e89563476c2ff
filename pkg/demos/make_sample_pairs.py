"""Generate the bundled synthetic infrared/visible test pairs.

Two registered 256x256 scenes, written as P5 PGM files into data/pairs
(or a directory given as the first argument).  Everything is seeded, so
rerunning reproduces the committed files byte for byte.

The scenes imitate the usual character of such pairs: the visible image
carries texture, shading, and scene detail; the infrared image is
smooth with bright thermally-active objects that the visible image
barely shows.
"""

import sys
from pathlib import Path

import numpy as np

from bandfuse.imgio import resize_bilinear, save_image

SIZE = 256


def smooth_field(rng, coarse, lo, hi):
    """Low-frequency random field: coarse noise upsampled bilinearly."""
    noise = rng.random((coarse, coarse))
    field = resize_bilinear(noise, SIZE, SIZE)
    return lo + (hi - lo) * field


def blur(img, factor=4):
    """Cheap blur: downsample then upsample."""
    small = resize_bilinear(img, SIZE // factor, SIZE // factor)
    return resize_bilinear(small, SIZE, SIZE)


def rect(canvas, y0, y1, x0, x1, value, blend=1.0):
    region = canvas[y0:y1, x0:x1]
    canvas[y0:y1, x0:x1] = (1 - blend) * region + blend * value


def ellipse_mask(cy, cx, ry, rx):
    yy, xx = np.mgrid[0:SIZE, 0:SIZE]
    return ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0


def scene_camp():
    """Buildings and trees in daylight; one person only the IR sees."""
    rng = np.random.default_rng(2024)

    vis = np.linspace(0.82, 0.30, SIZE)[:, None] * np.ones((1, SIZE))
    vis += smooth_field(rng, 8, -0.08, 0.08)
    rect(vis, 130, 220, 20, 100, 0.55)          # left building
    rect(vis, 150, 220, 150, 235, 0.40)         # right building
    for wy in range(145, 215, 22):              # windows, left
        for wx in range(30, 95, 24):
            rect(vis, wy, wy + 10, wx, wx + 12, 0.72)
    for wy in range(160, 215, 20):              # windows, right
        for wx in range(158, 228, 24):
            rect(vis, wy, wy + 9, wx, wx + 11, 0.25)
    tree = ellipse_mask(120, 125, 28, 18)
    vis[tree] = 0.35 + 0.1 * rng.random(tree.sum())
    person_v = ellipse_mask(205, 122, 14, 5)
    vis[person_v] = vis[person_v] * 0.92        # barely visible shadow
    vis += 0.04 * rng.standard_normal((SIZE, SIZE))

    ir = np.linspace(0.22, 0.46, SIZE)[:, None] * np.ones((1, SIZE))
    ir += smooth_field(rng, 6, -0.05, 0.05)
    rect(ir, 130, 220, 20, 100, 0.52)           # walls hold some heat
    rect(ir, 150, 220, 150, 235, 0.48)
    for wy in range(145, 215, 22):              # warm windows
        for wx in range(30, 95, 24):
            rect(ir, wy, wy + 10, wx, wx + 12, 0.70)
    ir[tree] = 0.30
    ir = blur(ir, 4)
    ir[person_v] = 0.95                         # the thermal signature
    ir = blur(ir, 2)
    ir += 0.015 * rng.standard_normal((SIZE, SIZE))
    return ir, vis


def scene_road():
    """Night road: lamp glare in the visible, pedestrians in the IR."""
    rng = np.random.default_rng(77)
    yy, xx = np.mgrid[0:SIZE, 0:SIZE] / (SIZE - 1)

    vis = 0.12 + smooth_field(rng, 10, 0.0, 0.10)
    road = (yy > 0.55) & (np.abs(xx - 0.5) < 0.22 + 0.5 * (yy - 0.55))
    vis[road] = 0.30 + 0.06 * rng.random(road.sum())
    glow = np.exp(-(((yy - 0.25) ** 2 + (xx - 0.72) ** 2) / 0.012))
    vis = vis + 0.75 * glow                     # streetlamp halo
    rect(vis, 58, 64, 182, 186, 0.9)            # lamp post head
    vis += 0.03 * rng.standard_normal((SIZE, SIZE))

    ir = 0.35 + smooth_field(rng, 5, -0.06, 0.06) - 0.15 * yy
    ir[road] = 0.50 - 0.10 * yy[road]           # asphalt stays warm
    ir = blur(ir, 4)
    ped1 = ellipse_mask(185, 95, 16, 6)
    ped2 = ellipse_mask(172, 150, 13, 5)
    ir[ped1] = 0.92
    ir[ped2] = 0.88
    rect(ir, 200, 222, 190, 240, 0.75)          # warm car hood
    ir = blur(ir, 2)
    ir += 0.012 * rng.standard_normal((SIZE, SIZE))
    return ir, vis


def main():
    out_dir = Path(sys.argv[1]) if len(sys.argv) > 1 else \
        Path(__file__).resolve().parent.parent / "data" / "pairs"
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, build in [("camp", scene_camp), ("road", scene_road)]:
        ir, vis = build()
        for tag, img in [("ir", ir), ("vi", vis)]:
            path = out_dir / f"{name}_{tag}.pgm"
            save_image(np.clip(img, 0.0, 1.0), path)
            print(f"wrote {path}")


if __name__ == "__main__":
    main()
