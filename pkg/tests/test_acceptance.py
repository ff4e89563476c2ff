"""Acceptance gate: eleven release criteria, one test per criterion.

The heavyweight fixtures run the 500-step smoke training (twice for the
determinism check, once more without the adversarial term) on the four
bundled images; expect roughly ten minutes of CPU for the whole module.
"""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pytest

import fdcheck
from test_metrics import (ag_loop, df_loop, ei_loop, entropy_loop,
                          mi_pair_loop, pearson_loop, sf_loop, std_loop)

from bandfuse.baselines import haar_dwt2, haar_idwt2, laplacian_filter
from bandfuse.fusion import FusionStrategy, fuse_images
from bandfuse.imgio import DatasetIterator, load_grayscale
from bandfuse.metrics import (METRIC_NAMES, avg_gradient, definition,
                              edge_intensity, entropy, mutual_information,
                              report, scd, spatial_frequency, std_dev,
                              write_csv)
from bandfuse.network import (LAYER_SPECS, build_model, forward,
                              load_checkpoint)
from bandfuse.tensor import Tensor
from bandfuse.training import (Discriminator, LossWeights, TrainConfig,
                               laplacian_target, train)

ROOT = Path(__file__).resolve().parent.parent
PAIR_DIR = ROOT / "data" / "pairs"

SMOKE_EPOCHS = 250  # 4 images, batch 2 -> 500 generator steps


@dataclass
class SmokeRun:
    model: object
    history: list
    out_dir: Path
    train_seconds: float


def _smoke_run(out_dir: Path, adv_weight: float) -> SmokeRun:
    config = TrainConfig(batch_size=2, initial_lr=1e-3,
                         max_epochs=SMOKE_EPOCHS, image_size=64, seed=0,
                         weights=LossWeights(adv=adv_weight))
    dataset = DatasetIterator.from_directory(PAIR_DIR, config.batch_size,
                                             config.image_size, config.seed)
    model = build_model(config.seed)
    disc = Discriminator.build(config.seed + 1)
    t0 = time.perf_counter()
    history = train(model, disc, dataset, config, out_dir=out_dir,
                    log_path=out_dir / "train.log")
    return SmokeRun(model=model, history=history, out_dir=out_dir,
                    train_seconds=time.perf_counter() - t0)


@pytest.fixture(scope="session")
def run_a(tmp_path_factory):
    return _smoke_run(tmp_path_factory.mktemp("run_a"), adv_weight=0.1)


@pytest.fixture(scope="session")
def run_b(tmp_path_factory):
    return _smoke_run(tmp_path_factory.mktemp("run_b"), adv_weight=0.1)


@pytest.fixture(scope="session")
def run_ablation(tmp_path_factory):
    return _smoke_run(tmp_path_factory.mktemp("run_abl"), adv_weight=0.0)


@pytest.fixture(scope="session")
def eval_batch():
    """The four bundled images resized to 64x64, one (4,1,64,64) array."""
    it = DatasetIterator(sorted(PAIR_DIR.glob("*.pgm")), batch_size=4,
                         image_size=64, seed=0)
    (batch,) = list(it.batches(0))
    return batch


def _line(n: int, text: str) -> None:
    print(f"criterion {n:02d}: PASS - {text}")


def test_criterion_01_gradient_suite():
    """Every differentiable op and the whole generator loss agree with
    central finite differences, fast enough to run routinely."""
    t0 = time.perf_counter()
    names = []
    for name, case in fdcheck.op_cases():
        case()  # asserts rel err < RTOL internally
        names.append(name)
    worst_e2e = fdcheck.end_to_end_case()
    elapsed = time.perf_counter() - t0
    assert len(names) >= 18
    assert worst_e2e < fdcheck.RTOL
    assert elapsed < 60.0, f"gradient suite took {elapsed:.1f}s"
    _line(1, f"{len(names)} op checks, end-to-end worst {worst_e2e:.1e},"
             f" {elapsed:.1f}s")


def test_criterion_02_architecture_shapes():
    """256x256 input produces three full-size detail maps, a 64x64
    semantic map, its upsampling, and the reconstruction; the parameter
    count equals the layer-table shape walk."""
    model = build_model(seed=0)
    x = Tensor(np.random.default_rng(0).random((1, 1, 256, 256),
                                               dtype=np.float32))
    dec = forward(model, x)
    assert dec.g1.shape == dec.g2.shape == dec.g3.shape == (1, 1, 256, 256)
    assert dec.s.shape == (1, 1, 64, 64)
    assert dec.ups.shape == (1, 1, 256, 256)
    assert dec.re.shape == (1, 1, 256, 256)
    walk = sum(cout * cin * k * k + cout
               for _n, cin, cout, k, _s, _a in LAYER_SPECS)
    assert model.parameter_count() == walk == 303810
    _line(2, f"shapes as designed, {walk} parameters")


def test_criterion_03_smoke_training(run_a):
    """500 generator steps on the bundled images drive the pixel loss
    down by at least two orders of magnitude within five minutes."""
    pix_first = run_a.history[0].pix
    pix_last = run_a.history[-1].pix
    ratio = pix_first / max(pix_last, 1e-12)
    assert len(run_a.history) == SMOKE_EPOCHS
    assert ratio >= 100.0, f"pixel loss only fell {ratio:.1f}x"
    assert run_a.train_seconds < 300.0, \
        f"training took {run_a.train_seconds:.0f}s"
    _line(3, f"pixel loss {pix_first:.4f} -> {pix_last:.6f}"
             f" ({ratio:.0f}x) in {run_a.train_seconds:.0f}s")


def test_criterion_04_adversarial_ablation(run_a, run_ablation, eval_batch):
    """Dropping the adversarial term leaves more high-frequency energy
    in the semantic band, measured by the Laplacian response."""
    def hf_energy(model):
        dec = forward(model, Tensor(eval_batch))
        return float(np.abs(laplacian_target(dec.s).data).mean())

    with_adv = hf_energy(run_a.model)
    without_adv = hf_energy(run_ablation.model)
    assert without_adv > with_adv, \
        f"ablation {without_adv:.5f} !> adversarial {with_adv:.5f}"
    _line(4, f"semantic-band |laplacian|: {without_adv:.5f} without vs"
             f" {with_adv:.5f} with the adversarial term")


def test_criterion_05_haar_oracle():
    """Wavelet analysis/synthesis round-trips 256x256 images and
    conserves energy."""
    x = np.random.default_rng(1).random((1, 1, 256, 256), dtype=np.float32)
    bands = haar_dwt2(Tensor(x))
    back = haar_idwt2(bands)
    round_err = float(np.max(np.abs(back.data - x)))
    e_in = float(np.sum(x.astype(np.float64) ** 2))
    e_bands = sum(float(np.sum(getattr(bands, n).data.astype(np.float64) ** 2))
                  for n in ("ll", "lh", "hl", "hh"))
    energy_err = abs(e_bands - e_in) / e_in
    assert round_err < 1e-6, f"round-trip error {round_err:.2e}"
    assert energy_err < 1e-6, f"energy mismatch {energy_err:.2e}"
    _line(5, f"round-trip {round_err:.1e}, energy drift {energy_err:.1e}")


def test_criterion_06_laplacian_kernels():
    """The two discrete Laplacian templates respond to an impulse with
    their own taps and annihilate affine images away from the border."""
    x = np.zeros((1, 1, 7, 7))
    x[0, 0, 3, 3] = 1.0
    g1 = laplacian_filter(Tensor(x), "g1").data[0, 0]
    g2 = laplacian_filter(Tensor(x), "g2").data[0, 0]
    expected_g1 = np.array([[0, 1, 0], [1, -4, 1], [0, 1, 0]], dtype=float)
    expected_g2 = np.array([[1, 1, 1], [1, -8, 1], [1, 1, 1]], dtype=float)
    assert np.array_equal(g1[2:5, 2:5], expected_g1)
    assert np.array_equal(g2[2:5, 2:5], expected_g2)
    yy, xx = np.mgrid[0:16, 0:16].astype(float)
    affine = (0.2 + 0.5 * xx - 0.3 * yy)[None, None]
    for kernel in ("g1", "g2"):
        resp = laplacian_filter(Tensor(affine), kernel).data[0, 0]
        assert np.allclose(resp[1:-1, 1:-1], 0.0, atol=1e-12)
    _line(6, "impulse responses exact, affine interiors zero")


def test_criterion_07_metric_invariants():
    """Constant images score zero on intensity metrics, known images
    hit their closed-form values, and every metric agrees with a
    scalar-loop oracle."""
    const = np.full((16, 16), 0.5)
    for metric in (std_dev, spatial_frequency, avg_gradient, edge_intensity,
                   definition, entropy):
        assert metric(const) == 0.0, metric.__name__
    uniform = (np.arange(256) / 255.0).reshape(16, 16)
    assert entropy(uniform) == pytest.approx(8.0, abs=1e-12)
    rng = np.random.default_rng(2)
    a = rng.random((32, 32))
    b = rng.random((32, 32))
    assert mutual_information(a, a, a) == pytest.approx(2 * entropy(a),
                                                        abs=1e-9)
    assert scd(a, b, a + b) == pytest.approx(2.0, abs=1e-6)
    fused = 0.6 * a + 0.4 * b
    assert entropy(fused) == pytest.approx(entropy_loop(fused), abs=1e-12)
    assert std_dev(fused) == pytest.approx(std_loop(fused), rel=1e-12)
    assert spatial_frequency(fused) == pytest.approx(sf_loop(fused), rel=1e-12)
    assert avg_gradient(fused) == pytest.approx(ag_loop(fused), rel=1e-12)
    assert edge_intensity(fused) == pytest.approx(ei_loop(fused), rel=1e-12)
    assert definition(fused) == pytest.approx(df_loop(fused), rel=1e-12)
    assert mutual_information(a, b, fused) == pytest.approx(
        mi_pair_loop(a, fused) + mi_pair_loop(b, fused), abs=1e-9)
    assert scd(a, b, fused) == pytest.approx(
        pearson_loop(fused - a, b) + pearson_loop(fused - b, a), abs=1e-9)
    _line(7, "closed-form values and loop oracles agree for all 8 metrics")


def test_criterion_08_fusion_identities():
    """Merging an image with itself under (max, avg) is exactly the
    reconstruction; strategies commute; the band sum is additive."""
    model = build_model(seed=3)
    rng = np.random.default_rng(3)
    x = Tensor(rng.random((1, 1, 64, 64), dtype=np.float32))
    y = Tensor(rng.random((1, 1, 64, 64), dtype=np.float32))
    dec = forward(model, x)
    fused_self = fuse_images(model, x, x, FusionStrategy("max", "avg"))
    assert np.array_equal(fused_self.data, dec.re.data)
    for high in ("max", "add"):
        for low in ("avg", "max"):
            s = FusionStrategy(high, low)
            ab = fuse_images(model, x, y, s)
            ba = fuse_images(model, y, x, s)
            assert np.array_equal(ab.data, ba.data), (high, low)
    band_sum = dec.g1.data + dec.g2.data + dec.g3.data + dec.ups.data
    assert np.array_equal(dec.re.data, band_sum)
    _line(8, "self-fusion identity, commutativity, exact additivity")


def test_criterion_09_determinism(run_a, run_b):
    """Re-running the smoke training with the same seed reproduces the
    checkpoint bytes and the log, wall-clock column aside."""
    ckpt_a = (run_a.out_dir / "model.ckpt").read_bytes()
    ckpt_b = (run_b.out_dir / "model.ckpt").read_bytes()
    assert ckpt_a == ckpt_b
    log_a = (run_a.out_dir / "train.log").read_text().splitlines()
    log_b = (run_b.out_dir / "train.log").read_text().splitlines()
    assert len(log_a) == len(log_b) == SMOKE_EPOCHS
    for la, lb in zip(log_a, log_b):
        assert la.split("\t")[:-1] == lb.split("\t")[:-1]
    _line(9, f"checkpoints ({len(ckpt_a)} bytes) and logs bit-identical")


def test_criterion_10_decomposition_throughput():
    """One 256x256 decomposition on a single CPU core inside half a
    second."""
    model = build_model(seed=0)
    x = Tensor(np.random.default_rng(4).random((1, 1, 256, 256),
                                               dtype=np.float32))
    forward(model, x)  # warm up
    best = min(_timed_forward(model, x) for _ in range(3))
    assert best < 0.5, f"decomposition took {best * 1000:.0f}ms"
    _line(10, f"decomposition in {best * 1000:.0f}ms")


def _timed_forward(model, x):
    t0 = time.perf_counter()
    forward(model, x)
    return time.perf_counter() - t0


def test_criterion_11_end_to_end_fusion_report(run_a, tmp_path):
    """The trained smoke model fuses both bundled pairs at native
    resolution and the full eight-metric report comes out finite."""
    model = load_checkpoint(run_a.out_dir / "model.ckpt")
    triples, names = [], []
    for scene in ("camp", "road"):
        ir = load_grayscale(PAIR_DIR / f"{scene}_ir.pgm").data
        vi = load_grayscale(PAIR_DIR / f"{scene}_vi.pgm").data
        fused = fuse_images(model, Tensor(ir[None, None]),
                            Tensor(vi[None, None]), FusionStrategy())
        triples.append((ir, vi, fused.data[0, 0]))
        names.append(scene)
    rep = report(triples, names=names)
    csv_path = tmp_path / "fusion_metrics.csv"
    write_csv(rep, csv_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "pair," + ",".join(METRIC_NAMES)
    assert len(lines) == 4  # header, two scenes, mean
    for line in lines[1:]:
        values = [float(v) for v in line.split(",")[1:]]
        assert len(values) == 8
        assert all(np.isfinite(v) for v in values)
    _line(11, f"2-pair fusion report finite across {len(METRIC_NAMES)}"
              " metrics")
