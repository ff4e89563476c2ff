"""End-to-end command-line behavior, exit codes, and file outputs."""

import numpy as np
import pytest

from bandfuse import cli
from bandfuse.errors import NumericError
from bandfuse.imgio import load_grayscale, save_image
from bandfuse.network import build_model, forward, save_checkpoint
from bandfuse.tensor import Tensor
from bandfuse.training import Discriminator


def write_image(path, seed, size=32):
    rng = np.random.default_rng(seed)
    base = rng.random((size, size))
    smooth = (base + np.roll(base, 1, 0) + np.roll(base, 1, 1)) / 3.0
    save_image(smooth, path)
    return path


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("train_data")
    for i in range(5):
        write_image(d / f"img_{i}.pgm", seed=i)
    return d


@pytest.fixture(scope="module")
def checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "model.ckpt"
    model = build_model(0)
    save_checkpoint(model, path,
                    extra_layers=Discriminator.build(1).layer_table())
    return path


class TestTrainCommand:
    def test_config_file_run(self, tmp_path, data_dir):
        out = tmp_path / "run"
        cfg = tmp_path / "train.cfg"
        cfg.write_text(
            "# smoke settings\n"
            f"data = {data_dir}\n"
            f"out = {out}\n"
            "epochs = 2\n"
            "batch = 2\n"
            "image_size = 32\n"
            "seed = 0\n"
        )
        rc = cli.main(["train", "--config", str(cfg)])
        assert rc == 0
        assert (out / "model.ckpt").exists()
        lines = (out / "train.log").read_text().splitlines()
        assert len(lines) == 2
        assert all(len(line.split("\t")) == 8 for line in lines)

    def test_cli_overrides_config(self, tmp_path, data_dir):
        out = tmp_path / "run"
        cfg = tmp_path / "train.cfg"
        cfg.write_text(f"data = {data_dir}\nout = {out}\n"
                       "epochs = 5\nbatch = 4\nimage_size = 32\n")
        rc = cli.main(["train", "--config", str(cfg), "--epochs", "1"])
        assert rc == 0
        assert len((out / "train.log").read_text().splitlines()) == 1

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("data = x\nlerning_rate = 0.1\n")
        rc = cli.main(["train", "--config", str(cfg)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "lerning_rate" in err and ":2:" in err

    def test_malformed_config_line(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("data\n")
        assert cli.main(["train", "--config", str(cfg)]) == 2

    def test_missing_data_dir_leaves_no_output(self, tmp_path, capsys):
        out = tmp_path / "never"
        rc = cli.main(["train", "--data", str(tmp_path / "nope"),
                       "--out", str(out), "--epochs", "1"])
        assert rc == 2
        assert not out.exists()
        assert "nope" in capsys.readouterr().err

    def test_no_data_specified(self, capsys):
        assert cli.main(["train", "--epochs", "1"]) == 2
        assert "data" in capsys.readouterr().err

    def test_bad_weight_value(self, data_dir):
        rc = cli.main(["train", "--data", str(data_dir),
                       "--lambda2", "-1.0", "--epochs", "1"])
        assert rc == 2


class TestDecomposeCommand:
    BAND_FILES = ["g1.pgm", "g2.pgm", "g3.pgm", "s.pgm", "ups.pgm", "re.pgm"]

    def test_writes_band_images(self, tmp_path, checkpoint):
        img = write_image(tmp_path / "in.pgm", seed=20)
        out = tmp_path / "dec"
        rc = cli.main(["decompose", "--checkpoint", str(checkpoint),
                       "--out", str(out), str(img)])
        assert rc == 0
        for name in self.BAND_FILES:
            assert (out / name).exists(), name
        note = (out / "remap.txt").read_text()
        assert "(value + 1) / 2" in note

    def test_outputs_match_forward(self, tmp_path, checkpoint):
        img = write_image(tmp_path / "in.pgm", seed=21)
        out = tmp_path / "dec"
        cli.main(["decompose", "--checkpoint", str(checkpoint),
                  "--out", str(out), str(img)])
        model = build_model(0)
        x = Tensor(load_grayscale(img).data[None, None])
        dec = forward(model, x)
        ref = tmp_path / "ref.pgm"
        save_image(dec.re.data[0, 0], ref)
        assert ref.read_bytes() == (out / "re.pgm").read_bytes()
        save_image((dec.g1.data[0, 0] + 1.0) / 2.0, ref)
        assert ref.read_bytes() == (out / "g1.pgm").read_bytes()

    def test_baseline_outputs(self, tmp_path, checkpoint):
        img = write_image(tmp_path / "in.pgm", seed=22)
        out = tmp_path / "dec"
        rc = cli.main(["decompose", "--checkpoint", str(checkpoint),
                       "--out", str(out), "--baseline", "laplacian",
                       str(img)])
        assert rc == 0
        assert (out / "lap_g1.pgm").exists()
        assert (out / "lap_g2.pgm").exists()
        assert "lap_g1" in (out / "remap.txt").read_text()

    def test_deterministic(self, tmp_path, checkpoint):
        img = write_image(tmp_path / "in.pgm", seed=23)
        outs = []
        for run in ("a", "b"):
            out = tmp_path / run
            cli.main(["decompose", "--checkpoint", str(checkpoint),
                      "--out", str(out), str(img)])
            outs.append(b"".join((out / n).read_bytes()
                                 for n in self.BAND_FILES))
        assert outs[0] == outs[1]

    def test_bad_image_size(self, tmp_path, checkpoint):
        img = write_image(tmp_path / "odd.pgm", seed=24, size=30)
        rc = cli.main(["decompose", "--checkpoint", str(checkpoint),
                       "--out", str(tmp_path / "dec"), str(img)])
        assert rc == 2

    def test_missing_checkpoint(self, tmp_path):
        img = write_image(tmp_path / "in.pgm", seed=25)
        rc = cli.main(["decompose", "--checkpoint",
                       str(tmp_path / "no.ckpt"),
                       "--out", str(tmp_path / "dec"), str(img)])
        assert rc == 2


class TestFuseCommand:
    def test_self_fusion_matches_reconstruction(self, tmp_path, checkpoint):
        img = write_image(tmp_path / "in.pgm", seed=30)
        dec_out = tmp_path / "dec"
        cli.main(["decompose", "--checkpoint", str(checkpoint),
                  "--out", str(dec_out), str(img)])
        fused = tmp_path / "fused.pgm"
        rc = cli.main(["fuse", "--checkpoint", str(checkpoint),
                       "--out", str(fused), str(img), str(img)])
        assert rc == 0
        assert fused.read_bytes() == (dec_out / "re.pgm").read_bytes()

    def test_argument_order_irrelevant(self, tmp_path, checkpoint):
        ir = write_image(tmp_path / "a_ir.pgm", seed=31)
        vi = write_image(tmp_path / "a_vi.pgm", seed=32)
        f1, f2 = tmp_path / "f1.pgm", tmp_path / "f2.pgm"
        cli.main(["fuse", "--checkpoint", str(checkpoint),
                  "--out", str(f1), str(ir), str(vi)])
        cli.main(["fuse", "--checkpoint", str(checkpoint),
                  "--out", str(f2), str(vi), str(ir)])
        assert f1.read_bytes() == f2.read_bytes()

    def test_prints_metric_table(self, tmp_path, checkpoint, capsys):
        ir = write_image(tmp_path / "a_ir.pgm", seed=33)
        vi = write_image(tmp_path / "a_vi.pgm", seed=34)
        cli.main(["fuse", "--checkpoint", str(checkpoint),
                  "--out", str(tmp_path / "f.pgm"), str(ir), str(vi)])
        lines = capsys.readouterr().out.splitlines()
        assert len(lines) == 8
        names = [line.split("\t")[0] for line in lines]
        assert names == ["EN", "SD", "SF", "AG", "EI", "DF", "MI", "SCD"]
        for line in lines:
            float(line.split("\t")[1])

    def test_strategies_produce_distinct_files(self, tmp_path, checkpoint):
        ir = write_image(tmp_path / "a_ir.pgm", seed=35)
        vi = write_image(tmp_path / "a_vi.pgm", seed=36)
        blobs = {}
        for high in ("max", "add"):
            for low in ("avg", "max"):
                out = tmp_path / f"f_{high}_{low}.pgm"
                rc = cli.main(["fuse", "--checkpoint", str(checkpoint),
                               "--high", high, "--low", low,
                               "--out", str(out), str(ir), str(vi)])
                assert rc == 0
                blobs[(high, low)] = out.read_bytes()
        assert len(set(blobs.values())) == 4

    def test_size_mismatch(self, tmp_path, checkpoint):
        ir = write_image(tmp_path / "a.pgm", seed=37, size=32)
        vi = write_image(tmp_path / "b.pgm", seed=38, size=64)
        rc = cli.main(["fuse", "--checkpoint", str(checkpoint),
                       "--out", str(tmp_path / "f.pgm"), str(ir), str(vi)])
        assert rc == 2

    def test_bad_strategy_choice(self, tmp_path, checkpoint):
        ir = write_image(tmp_path / "a.pgm", seed=39)
        rc = cli.main(["fuse", "--checkpoint", str(checkpoint),
                       "--high", "median",
                       "--out", str(tmp_path / "f.pgm"),
                       str(ir), str(ir)])
        assert rc == 2


class TestEvaluateCommand:
    def _make_triple(self, d, stem, seed):
        ir = write_image(d / f"{stem}_ir.pgm", seed=seed)
        vi = write_image(d / f"{stem}_vi.pgm", seed=seed + 1)
        a = load_grayscale(ir).data
        b = load_grayscale(vi).data
        save_image((a + b) / 2.0, d / f"{stem}_fused.pgm")

    def test_csv_output(self, tmp_path):
        self._make_triple(tmp_path, "scene", seed=50)
        out = tmp_path / "scores.csv"
        rc = cli.main(["evaluate", "--out", str(out), str(tmp_path)])
        assert rc == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 3
        assert lines[0] == "pair,EN,SD,SF,AG,EI,DF,MI,SCD"
        assert lines[1].startswith("scene,")
        assert lines[2].startswith("mean,")

    def test_stdout_default(self, tmp_path, capsys):
        self._make_triple(tmp_path, "scene", seed=52)
        rc = cli.main(["evaluate", str(tmp_path)])
        assert rc == 0
        out = capsys.readouterr().out
        assert out.startswith("pair,EN")

    def test_incomplete_triple_warns(self, tmp_path, capsys):
        self._make_triple(tmp_path, "good", seed=54)
        write_image(tmp_path / "lonely_ir.pgm", seed=56)
        out = tmp_path / "scores.csv"
        rc = cli.main(["evaluate", "--out", str(out), str(tmp_path)])
        assert rc == 0
        captured = capsys.readouterr()
        assert "lonely" in captured.err
        rows = out.read_text().splitlines()
        assert len(rows) == 3  # header + good + mean

    def test_no_triples(self, tmp_path, capsys):
        write_image(tmp_path / "plain.pgm", seed=57)
        assert cli.main(["evaluate", str(tmp_path)]) == 2
        assert "triple" in capsys.readouterr().err

    def test_not_a_directory(self, tmp_path):
        assert cli.main(["evaluate", str(tmp_path / "missing")]) == 2


class TestMainDispatch:
    def test_no_command(self, capsys):
        assert cli.main([]) == 2
        capsys.readouterr()

    def test_missing_required_args(self, capsys):
        assert cli.main(["fuse"]) == 2
        capsys.readouterr()

    def test_numeric_error_maps_to_three(self, monkeypatch, tmp_path, capsys):
        def boom(args):
            raise NumericError("loss went non-finite")
        monkeypatch.setitem(cli._COMMANDS, "evaluate", boom)
        assert cli.main(["evaluate", str(tmp_path)]) == 3
        assert "non-finite" in capsys.readouterr().err

    def test_config_parser_accepts_comments_and_blanks(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("\n# comment only\nepochs = 3  # trailing\n\n")
        assert cli.parse_config_file(cfg) == {"epochs": 3}

    def test_config_bad_value_type(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("epochs = soon\n")
        with pytest.raises(cli.ConfigError, match="soon"):
            cli.parse_config_file(cfg)
