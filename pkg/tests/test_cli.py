import subprocess
import sys

import numpy as np
import pytest

from gi0net import formats
from gi0net.cli import main
from gi0net.network import init_model, save_model
from gi0net.numerics import RngStream

SMALL_TRAIN = ["--alphas=-12,-3", "--sizes", "50,200", "--repeats", "20", "--epochs", "3"]
SMALL_MAP = ["--alphas=-12,-3", "--kernels", "3,5", "--repeats", "4", "--epochs", "2"]


def _mosaic_spec(path, w=12, h=8):
    path.write_text(f"width = {w}\nheight = {h}\nregion = 0 0 6 {h} -1.5\nregion = 6 0 {w} {h} -15\n")
    return path


def _files_equal(a, b):
    return a.read_bytes() == b.read_bytes()


class TestGen:
    def test_samples(self, tmp_path):
        out = tmp_path / "s.txt"
        assert main(["gen", "samples", "--alpha=-7", "--n", "100", "--looks", "1", "--seed", "1", "-o", str(out)]) == 0
        lines = out.read_text().splitlines()
        assert len(lines) == 101 and lines[0].startswith("# alpha=-7.0 gamma=6.0 L=1")

    def test_samples_deterministic(self, tmp_path):
        for name in ("a", "b"):
            main(["gen", "samples", "--alpha=-3", "--n", "50", "--seed", "5", "-o", str(tmp_path / name)])
        assert _files_equal(tmp_path / "a", tmp_path / "b")

    def test_mosaic(self, tmp_path):
        spec = _mosaic_spec(tmp_path / "m.cfg")
        for name in ("a.girf", "b.girf"):
            assert main(["gen", "mosaic", "--spec", str(spec), "--seed", "1", "-o", str(tmp_path / name)]) == 0
        assert formats.read_girf(tmp_path / "a.girf").shape == (8, 12)
        assert _files_equal(tmp_path / "a.girf", tmp_path / "b.girf")

    def test_bad_spec(self, tmp_path, capsys):
        (tmp_path / "m.cfg").write_text("width = 4\nheight = 4\nregion = 0 0 2 4 -2\n")
        assert main(["gen", "mosaic", "--spec", str(tmp_path / "m.cfg"), "-o", str(tmp_path / "x")]) == 2
        assert "error" in capsys.readouterr().err
        assert not (tmp_path / "x").exists()

    def test_bad_alpha(self, tmp_path):
        assert main(["gen", "samples", "--alpha=-0.5", "--n", "5", "-o", str(tmp_path / "x")]) != 0


class TestTrain:
    def test_train_sample_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert main(["train-sample", *SMALL_TRAIN, "--seed", "4", "-o", str(tmp_path / name)]) == 0
        assert _files_equal(tmp_path / "a", tmp_path / "b")
        report = (tmp_path / "a.jsonl").read_text().splitlines()
        assert len(report) == 4 and '"final_mse"' in report[-1]

    def test_config_then_flags(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("alphas = -12,-3\nsizes = 50\nrepeats = 10\nepochs = 5\nnm = 3\n")
        assert main(["train-sample", "--config", str(cfg), "--epochs", "2", "-o", str(tmp_path / "m")]) == 0
        assert len((tmp_path / "m.jsonl").read_text().splitlines()) == 3
        assert "layers 3 8 4 1" in (tmp_path / "m").read_text()

    def test_unknown_config_key(self, tmp_path):
        cfg = tmp_path / "t.cfg"
        cfg.write_text("epochs = 2\nlearning_rate = 0.1\n")
        assert main(["train-sample", "--config", str(cfg), "-o", str(tmp_path / "m")]) == 2
        assert not (tmp_path / "m").exists()

    def test_bad_values(self, tmp_path):
        assert main(["train-sample", "--alphas=-20,-3", "-o", str(tmp_path / "m")]) == 2
        assert main(["train-sample", "--epochs", "0", "-o", str(tmp_path / "m")]) == 2
        assert main(["train-sample", "--sizes", "a,b", "-o", str(tmp_path / "m")]) == 2

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_numerical_abort(self, tmp_path, capsys):
        code = main(["train-sample", *SMALL_TRAIN, "--lr", "1e300", "-o", str(tmp_path / "m")])
        assert code == 4
        assert "epoch" in capsys.readouterr().err

    def test_train_map_deterministic(self, tmp_path):
        for name in ("a", "b"):
            assert main(["train-map", *SMALL_MAP, "--seed", "2", "-o", str(tmp_path / name)]) == 0
        assert _files_equal(tmp_path / "a", tmp_path / "b")
        assert "kernels=3,5" in (tmp_path / "a").read_text()


class TestEstimate:
    @pytest.fixture
    def sample_file(self, tmp_path):
        path = tmp_path / "s.txt"
        main(["gen", "samples", "--alpha=-4", "--n", "300", "--seed", "2", "-o", str(path)])
        return path

    @pytest.mark.parametrize("estimator", ["lcum", "mle"])
    def test_baselines(self, sample_file, estimator, capsys):
        assert main(["estimate", estimator, "--sample", str(sample_file)]) == 0
        out = capsys.readouterr().out
        assert out.startswith("alpha_hat=") and "status=Success" in out and "ms=" in out

    def test_oracle_grid(self, sample_file, capsys):
        assert main(["estimate", "mle", "--sample", str(sample_file), "--oracle-grid"]) == 0
        out = capsys.readouterr().out
        fields = dict(f.split("=") for f in out.split())
        assert abs(float(fields["alpha_hat"]) - float(fields["oracle"])) <= 0.002

    def test_constant_sample(self, tmp_path, capsys):
        (tmp_path / "c.txt").write_text("2.0\n2.0\n2.0\n")
        assert main(["estimate", "lcum", "--sample", str(tmp_path / "c.txt"), "--looks", "1"]) == 0
        assert "status=DegenerateInput" in capsys.readouterr().out

    def test_nn(self, sample_file, tmp_path, capsys):
        save_model(init_model(RngStream(0), 2), tmp_path / "m")
        assert main(["estimate", "nn", "--sample", str(sample_file), "--model", str(tmp_path / "m")]) == 0
        assert "alpha_hat=" in capsys.readouterr().out

    def test_errors(self, sample_file, tmp_path):
        assert main(["estimate", "nn", "--sample", str(sample_file)]) == 2
        (tmp_path / "c.txt").write_text("2.0\n")
        assert main(["estimate", "lcum", "--sample", str(tmp_path / "c.txt")]) == 2
        assert main(["estimate", "lcum", "--sample", str(tmp_path / "missing.txt"), "--looks", "1"]) == 3
        (tmp_path / "bad.model").write_text("GI0NN 1\nlayers 2 8 4\n")
        assert main(["estimate", "nn", "--sample", str(sample_file), "--model", str(tmp_path / "bad.model")]) == 3


class TestMap:
    @pytest.fixture
    def model_file(self, tmp_path):
        m = init_model(RngStream(0), 2)
        m.meta.kernels = (2, 5)
        save_model(m, tmp_path / "map.model")
        return tmp_path / "map.model"

    def test_single_pixel(self, tmp_path, model_file, capsys):
        formats.write_girf(np.array([[1.5]]), tmp_path / "r.girf")
        code = main(["map", "--model", str(model_file), "--input", str(tmp_path / "r.girf"), "--kernel", "1",
                     "-o", str(tmp_path / "o.girf")])
        assert code == 0
        assert formats.read_girf(tmp_path / "o.girf").shape == (1, 1)
        captured = capsys.readouterr()
        assert "moments=" in captured.out and "inference=" in captured.out and "total=" in captured.out
        assert "not among trained kernels" in captured.err

    def test_pgm_with_zeros_and_preview(self, tmp_path, model_file, capsys):
        formats.write_pgm(np.array([[0, 10, 20], [30, 0, 50]]), tmp_path / "r.pgm")
        code = main(["map", "--model", str(model_file), "--input", str(tmp_path / "r.pgm"), "--kernel", "2",
                     "--pad", "replicate", "-o", str(tmp_path / "o.girf"), "--ppm", str(tmp_path / "o.ppm")])
        assert code == 0
        assert "clamped 2 zero pixels" in capsys.readouterr().err
        assert (tmp_path / "o.ppm").read_bytes().startswith(b"P6\n3 2\n255\n")

    def test_deterministic(self, tmp_path, model_file):
        spec = _mosaic_spec(tmp_path / "m.cfg")
        main(["gen", "mosaic", "--spec", str(spec), "-o", str(tmp_path / "r.girf")])
        for name in ("a", "b"):
            main(["map", "--model", str(model_file), "--input", str(tmp_path / "r.girf"), "--kernel", "5",
                  "-o", str(tmp_path / name)])
        assert _files_equal(tmp_path / "a", tmp_path / "b")

    def test_errors(self, tmp_path, model_file):
        formats.write_girf(np.ones((2, 2)), tmp_path / "r.girf")
        base = ["map", "--model", str(model_file), "--input", str(tmp_path / "r.girf"), "-o", str(tmp_path / "o")]
        assert main(base + ["--kernel", "0"]) == 2
        assert main(base + ["--kernel", "9"]) == 2
        formats.write_girf(-np.ones((2, 2)), tmp_path / "r.girf")
        assert main(base + ["--kernel", "1"]) == 3


class TestBench:
    def test_lcum_smoke(self, tmp_path, capsys):
        args = ["bench", "--estimators", "lcum,mle", "--trials", "10", "--alphas=-1.5,-7", "--looks", "1",
                "--sizes", "25,121"]
        assert main(args + ["-o", str(tmp_path / "a")]) == 0
        assert main(args + ["-o", str(tmp_path / "b")]) == 0
        for name in ("mse.csv", "failure_rates.csv", "counts.csv"):
            assert _files_equal(tmp_path / "a" / name, tmp_path / "b" / name)
        assert len((tmp_path / "a" / "mse.csv").read_text().splitlines()) == 1 + 2 * 2 * 2
        assert "tables written" in capsys.readouterr().out

    def test_models(self, tmp_path):
        m = init_model(RngStream(0), 2)
        save_model(m, tmp_path / "nn.model")
        args = ["bench", "--estimators", "nn2", "--trials", "2", "--looks", "1", "--sizes", "9",
                "--model", f"nn2={tmp_path / 'nn.model'}", "-o", str(tmp_path / "o")]
        assert main(args) == 0
        assert main(args[:-4] + ["-o", str(tmp_path / "o")]) == 2
        assert main(args[:-2] + ["--looks", "1,3", "-o", str(tmp_path / "o")]) == 2


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["gen", "samples", "--n", "3", "-o", "x"])
    assert info.value.code == 2


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "gi0net", "--help"], capture_output=True, text=True, check=True)
    assert "train-sample" in out.stdout
