import csv
import io
import math
import subprocess
import sys

import numpy as np
import pytest

from quadcompound.cli import main, parse_sweep_config, render_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def table(text):
    rows = list(csv.reader(io.StringIO(text)))
    return rows[0], rows[1:]


class TestPoints:
    def test_uniform(self, capsys):
        code, out, _ = run(capsys, "points", "--scheme", "quant-midpoint", "--dist", "uniform", "--n", "2")
        assert code == 0
        assert out == "index,z,w\n1,0.25,0.5\n2,0.75,0.5\n"

    def test_hermite(self, capsys):
        _, out, _ = run(capsys, "points", "--scheme", "hermite", "--dist", "std-normal", "--n", "3")
        header, rows = table(out)
        z = [float(r[1]) for r in rows]
        w = [float(r[2]) for r in rows]
        np.testing.assert_allclose(z, [-1.7320508, 0, 1.7320508], atol=1e-7)
        np.testing.assert_allclose(w, [1 / 6, 2 / 3, 1 / 6], atol=1e-7)

    def test_sigmoid_normal(self, capsys):
        _, out, _ = run(
            capsys, "points", "--scheme", "quant-midpoint", "--dist", "sigmoid-normal", "--pi", "0", "--sigma", "1", "--n", "4"
        )
        z = [float(r[1]) for r in table(out)[1]]
        np.testing.assert_allclose(z, [0.1687, 0.4187, 0.5813, 0.8313], atol=1e-4)

    def test_ascending_for_every_scheme(self, capsys):
        for scheme in ("quant-midpoint", "sqrt-quant", "hermite"):
            _, out, _ = run(capsys, "points", "--scheme", scheme, "--dist", "sigmoid-normal", "--pi", "2", "--sigma", "1", "--n", "6")
            z = [float(r[1]) for r in table(out)[1]]
            assert z == sorted(z)

    def test_invalid_combination(self, capsys):
        code, out, err = run(capsys, "points", "--scheme", "quant-midpoint", "--dist", "std-normal", "--n", "3")
        assert code != 0 and out == "" and "error" in err


class TestPmf:
    def test_first_row(self, capsys):
        _, out, _ = run(capsys, "pmf", "--mu", "0", "--sigma", "1", "--n", "2", "--xmax", "3")
        header, rows = table(out)
        assert header == ["x", "q", "dq_dmu", "dq_dsigma"]
        assert float(rows[0][1]) == pytest.approx(0.41483, abs=1e-4)

    def test_normalized(self, capsys):
        _, out, _ = run(capsys, "pmf", "--mu", "0", "--sigma", "0.5", "--n", "20", "--xmax", "200")
        q = [float(r[1]) for r in table(out)[1]]
        assert len(q) == 201 and abs(math.fsum(q) - 1) < 1e-6

    def test_gradient_column(self, capsys):
        h = 1e-5
        cols = {}
        for mu in (-h, 0.0, h):
            _, out, _ = run(capsys, "pmf", f"--mu={mu!r}", "--sigma", "1", "--n", "8", "--xmax", "10")
            cols[mu] = np.array([[float(v) for v in r[1:]] for r in table(out)[1]])
        fd = (cols[h][:, 0] - cols[-h][:, 0]) / (2 * h)
        np.testing.assert_allclose(cols[0.0][:, 1], fd, atol=1e-4)

    def test_bad_sigma(self, capsys):
        code, _, err = run(capsys, "pmf", "--sigma", "0")
        assert code == 2 and "sigma" in err


class TestVdm:
    def test_two_point_density(self, capsys):
        _, out, _ = run(capsys, "vdm", "density", "--n", "2", "--pi", "0", "--xmin", "-1", "--xmax", "1", "--grid", "3")
        rows = table(out)[1]
        assert float(rows[1][1]) == pytest.approx(0.12952, abs=1e-4)

    def test_density_integrates(self, capsys):
        _, out, _ = run(capsys, "vdm", "density", "--pi", "0.5", "--sigma", "2", "--n", "20",
                        "--xmin", "-12", "--xmax", "12", "--grid", "2001")
        data = np.array([[float(v) for v in r] for r in table(out)[1]])
        assert np.trapezoid(data[:, 1], data[:, 0]) == pytest.approx(1.0, abs=1e-3)

    def test_identical_components(self, capsys):
        _, out, _ = run(capsys, "vdm", "density", "--locs", "1;1", "--pi", "0.7", "--sigma", "3",
                        "--xmin", "-2", "--xmax", "4", "--grid", "7")
        data = np.array([[float(v) for v in r] for r in table(out)[1]])
        from scipy import stats

        np.testing.assert_allclose(data[:, 1], stats.norm.pdf(data[:, 0], loc=1.0), rtol=1e-8)

    def test_sample_shape_and_seed(self, capsys):
        args = ["vdm", "sample", "--locs", "1,0;-1,0;0,2", "--pi", "0.5,0", "--scheme", "cubature", "--n", "3", "--count", "5"]
        _, a, _ = run(capsys, *args, "--seed", "7")
        _, b, _ = run(capsys, *args, "--seed", "7")
        _, c, _ = run(capsys, *args, "--seed", "8")
        header, rows = table(a)
        assert header == ["k", "x1", "x2"] and len(rows) == 5
        assert a == b and a != c

    def test_inconsistent_dimensions(self, capsys):
        code, _, err = run(capsys, "vdm", "sample", "--locs", "1,0;-1")
        assert code == 2 and "dimension" in err

    def test_density_needs_one_dimension(self, capsys):
        code, _, _ = run(capsys, "vdm", "density", "--locs", "1,0;-1,0")
        assert code == 2


class TestSweep:
    def test_config_parser(self):
        cfg = parse_sweep_config("# comment\npis = 0, 1.5\nns=5,10\nschemes = quant-midpoint, hermite\ndim = 3\n")
        assert cfg == {"pis": [0.0, 1.5], "ns": [5, 10], "schemes": ("quantile-midpoint", "hermite-pushforward"), "dim": 3}

    def test_config_file(self, capsys, tmp_path):
        conf = tmp_path / "sweep.conf"
        conf.write_text("pis = 0.5\nsigmas = 2\nns = 5, 10\nmus = 2\ndim = 3\nreference_n = 60\n")
        out = tmp_path / "rows.csv"
        summary = tmp_path / "summary.csv"
        code, _, _ = run(capsys, "sweep", "--config", str(conf), "--out", str(out), "--summary", str(summary))
        assert code == 0
        header, rows = table(out.read_text())
        assert header == ["pi", "sigma", "n", "mu", "scheme", "kl_q_p", "kl_p_q", "tv", "error"]
        assert len(rows) == 6 and all(r[-1] == "" for r in rows)
        for r in rows:
            for v in r[5:8]:
                assert math.isfinite(float(v))
        sh, srows = table(summary.read_text())
        assert sh == ["group", "scheme", "n", "kl_q_p", "kl_p_q", "tv"]
        assert {r[0] for r in srows} == {"scheme", "n"}

    def test_flags_override(self, capsys):
        code, out, err = run(capsys, "sweep", "--pis", "0", "--ns", "5", "--mus", "2", "--dim", "2",
                             "--reference-n", "40", "--schemes", "quant-midpoint")
        assert code == 0
        assert len(table(out)[1]) == 1 and "group,scheme" in err

    def test_reference_disagreement(self, capsys):
        args = ["sweep", "--pis", "2.5", "--sigmas", "5", "--ns", "5", "--mus", "2", "--dim", "2",
                "--reference-n", "20", "--bias", "scaled"]
        code, out, err = run(capsys, *args)
        assert code == 1 and out == "" and "reference grids disagree" in err
        code, out, _ = run(capsys, *args, "--no-self-check")
        assert code == 0 and len(table(out)[1]) == 3

    def test_bad_config(self, capsys, tmp_path):
        conf = tmp_path / "bad.conf"
        conf.write_text("colour = blue\n")
        code, _, err = run(capsys, "sweep", "--config", str(conf))
        assert code == 2 and "colour" in err


class TestGradcheck:
    def test_linear(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "--case", "linear", "--k", "100")
        header, rows = table(out)
        assert header == ["case", "value_mean", "grad_mean", "true_grad", "stderr_grad", "pass", "known_biased"]
        assert rows[0][2] == "1" and rows[0][5] == "true" and code == 0

    def test_step(self, capsys):
        code, out, _ = run(capsys, "gradcheck", "--case", "step", "--k", "1000")
        row = table(out)[1][0]
        assert row[2] == "0" and row[5] == "true" and row[6] == "true"

    def test_quadratic(self, capsys):
        _, out, _ = run(capsys, "gradcheck", "--case", "quadratic", "--k", "100000", "--seed", "2")
        row = table(out)[1][0]
        assert abs(float(row[2]) - 2.0) < 4 * float(row[4])

    def test_unknown_case(self, capsys):
        code, _, err = run(capsys, "gradcheck", "--case", "cubic")
        assert code == 2 and "cubic" in err


class TestOutput:
    def test_deterministic_files(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for p in (a, b):
            run(capsys, "gradcheck", "--k", "2000", "--seed", "3", "--out", str(p))
        assert a.read_bytes() == b.read_bytes()
        assert b"\r" not in a.read_bytes()

    def test_no_temp_files_left(self, capsys, tmp_path):
        out = tmp_path / "pts.csv"
        run(capsys, "points", "--scheme", "hermite", "--dist", "std-normal", "--n", "4", "--out", str(out))
        assert [p.name for p in tmp_path.iterdir()] == ["pts.csv"]

    def test_gnuplot_script(self, capsys, tmp_path):
        out, gp = tmp_path / "pmf.csv", tmp_path / "pmf.gp"
        code, _, _ = run(capsys, "pmf", "--out", str(out), "--gnuplot", str(gp))
        assert code == 0 and str(out) in gp.read_text() and "plot" in gp.read_text()

    def test_gnuplot_needs_file(self, capsys):
        code, _, _ = run(capsys, "pmf", "--gnuplot", "x.gp")
        assert code == 2

    def test_significant_digits(self):
        text = render_csv(["a", "b", "c"], [(1 / 3, 12345678901.0, math.inf)])
        assert text == "a,b,c\n0.333333333,1.23456789e+10,inf\n"

    def test_row_width_checked(self):
        with pytest.raises(ValueError):
            render_csv(["a", "b"], [(1,)])

    def test_console_script(self):
        res = subprocess.run(
            [sys.executable, "-m", "quadcompound.cli", "points", "--scheme", "quant-midpoint", "--dist", "uniform", "--n", "1"],
            capture_output=True, text=True, check=True,
        )
        assert res.stdout == "index,z,w\n1,0.5,1\n"
