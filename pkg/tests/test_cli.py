import json
import math
import os

import numpy as np
import pytest

from ldpustat.cli import main


@pytest.fixture
def files(tmp_path):
    """Worked-example inputs: 3-site all-ones coupling, +,+,- data."""
    matrix = tmp_path / "q.csv"
    matrix.write_text("0,1,1\n1,0,1\n1,1,0\n")
    motif = tmp_path / "k2.txt"
    motif.write_text("v=2\n1 2\n")
    data = tmp_path / "x.csv"
    data.write_text("1\n1\n0\n")
    kernel = tmp_path / "w.csv"
    kernel.write_text("0,1\n1,0\n")
    zero = tmp_path / "zero.csv"
    zero.write_text("0,0\n0,0\n")
    return {"matrix": str(matrix), "motif": str(motif), "data": str(data),
            "kernel": str(kernel), "zero": str(zero), "dir": tmp_path}


def run(args, capsys):
    code = main(args)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip().startswith("{") else out


class TestKernelCommands:
    def test_cutnorm_zero(self, files, capsys):
        code, payload = run(["kernel", "cutnorm", "--matrix", files["zero"]], capsys)
        assert code == 0
        assert payload["value"] == 0.0
        assert payload["certified_exact"]

    def test_cutnorm_swap(self, files, capsys):
        code, payload = run(["kernel", "cutnorm", "--w", files["kernel"]], capsys)
        assert code == 0
        assert payload["value"] == pytest.approx(0.5)

    def test_missing_file_exit_2(self, files, capsys):
        code = main(["kernel", "cutnorm", "--matrix", "no-such-file.csv"])
        assert code == 2

    def test_malformed_csv_line_numbered(self, files, capsys, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("0,1\n1,x\n")
        code = main(["kernel", "cutnorm", "--matrix", str(bad)])
        err = capsys.readouterr().err
        assert code == 2
        assert "bad.csv:2" in err

    def test_norms_and_degrees(self, files, capsys):
        code, payload = run(["kernel", "norms", "--w", files["kernel"],
                             "--r", "1,2,inf"], capsys)
        assert code == 0
        assert payload["norms"]["1"] == pytest.approx(0.5)
        assert payload["norms"]["inf"] == pytest.approx(1.0)
        code, payload = run(["kernel", "degrees", "--w", files["kernel"]], capsys)
        assert code == 0
        assert payload["values"] == [0.5, 0.5]

    def test_assumptions(self, files, capsys):
        code, payload = run(["kernel", "assumptions", "--wn", files["kernel"],
                             "--w", files["kernel"], "--motif", files["motif"],
                             "--q", "2"], capsys)
        assert code == 0
        assert payload["flags"]["eq_q"] is True
        assert "q_delta_norms" in payload and "degree_profile" in payload

    def test_weakcut_permuted(self, files, capsys, tmp_path):
        a = tmp_path / "a.csv"
        a.write_text("1,2,3\n2,5,4\n3,4,9\n")
        b = tmp_path / "b.csv"  # permutation (2,0,1) of a
        b.write_text("9,3,4\n3,1,2\n4,2,5\n")
        code, payload = run(["kernel", "weakcut", "--w", str(a), "--w2", str(b)],
                            capsys)
        assert code == 0
        assert payload["value"] == pytest.approx(0.0, abs=1e-12)
        assert payload["certified_exact"]


class TestUstatCommands:
    def test_worked_example(self, files, capsys):
        code, payload = run(["ustat", "eval", "--motif", files["motif"],
                             "--matrix", files["matrix"], "--data", files["data"],
                             "--phi", "product", "--mu", "rademacher"], capsys)
        assert code == 0
        assert payload["u"] == pytest.approx(-2 / 9)
        assert payload["v"] == pytest.approx(-2 / 9)

    def test_gap_zero_for_edge(self, files, capsys):
        code, payload = run(["ustat", "gap", "--motif", files["motif"],
                             "--matrix", files["matrix"], "--data", files["data"]],
                            capsys)
        assert code == 0
        assert payload["gap"] == 0.0


class TestSolveCommands:
    def test_zlimit_theta_zero(self, files, capsys):
        code, payload = run(["solve", "zlimit", "--family", "potts",
                             "--mu", "uniform:3", "--theta", "0"], capsys)
        assert code == 0
        assert payload["z_value"] == pytest.approx(0.0, abs=1e-10)

    def test_zlimit_curie_weiss(self, files, capsys):
        code, payload = run(["solve", "zlimit", "--family", "multilinear",
                             "--mu", "rademacher", "--theta", "1"], capsys)
        assert code == 0
        assert payload["z_value"] == pytest.approx(0.32652388742692406, abs=1e-8)
        assert len(payload["optimizers"]) == 2

    def test_rate_curve_artifact(self, files, capsys):
        out = files["dir"] / "rate_out"
        code = main(["solve", "rate", "--family", "multilinear",
                     "--grid", "0.6,0.8,1.0", "--out", str(out)])
        assert code == 0
        assert (out / "result.json").exists()
        csv = (out / "rate_curve.csv").read_text().splitlines()
        assert csv[0] == "theta,z,t,rate,flagged"
        assert len(csv) == 4

    def test_constrained(self, files, capsys):
        code, payload = run(["solve", "constrained", "--family", "multilinear",
                             "--t", "0.25"], capsys)
        assert code == 0
        assert payload["rate"] == pytest.approx(0.13081203594113703, abs=1e-6)


class TestGibbsCommands:
    def test_exact_logz_complete(self, files, capsys):
        code, payload = run(["gibbs", "exact-logz-complete", "--family", "ising",
                             "--n", "10", "--theta", "1", "--mu", "rademacher"],
                            capsys)
        assert code == 0
        assert payload["value"] == pytest.approx(0.3094523055435937, abs=1e-12)

    def test_exact_logz_two_sites(self, files, capsys):
        code, payload = run(["gibbs", "exact-logz", "--family", "ising", "--n", "2",
                             "--theta", "2", "--mu", "rademacher"], capsys)
        assert code == 0
        assert payload["value"] == pytest.approx(0.5 * math.log(math.cosh(2.0)),
                                                 abs=1e-12)

    def test_chain_deterministic_outputs(self, files, capsys):
        out1 = files["dir"] / "c1"
        out2 = files["dir"] / "c2"
        argset = ["gibbs", "chain", "--family", "ising", "--n", "8",
                  "--theta", "0.5", "--sweeps", "50", "--burnin", "10",
                  "--seed", "42"]
        assert main(argset + ["--out", str(out1)]) == 0
        assert main(argset + ["--out", str(out2)]) == 0
        assert (out1 / "chain.csv").read_bytes() == (out2 / "chain.csv").read_bytes()
        assert (out1 / "result.json").read_bytes() == (out2 / "result.json").read_bytes()

    def test_tail(self, files, capsys):
        code, payload = run(["gibbs", "tail", "--family", "ising", "--mu",
                             "rademacher", "--t", "0.25", "--n-list", "8,12"],
                            capsys)
        assert code == 0
        assert payload["rates"]["8"] == pytest.approx(-math.log(18 / 256) / 8,
                                                      abs=1e-12)


class TestConfigFile:
    def test_config_provides_defaults_flags_win(self, files, capsys, tmp_path):
        cfg = tmp_path / "run.json"
        cfg.write_text(json.dumps({"theta": 2.0, "n": 2}))
        code, payload = run(["gibbs", "exact-logz", "--family", "ising",
                             "--mu", "rademacher", "--config", str(cfg)], capsys)
        assert code == 0
        assert payload["value"] == pytest.approx(0.5 * math.log(math.cosh(2.0)))
        # explicit flag overrides the config value
        code, payload = run(["gibbs", "exact-logz", "--family", "ising",
                             "--mu", "rademacher", "--config", str(cfg),
                             "--theta", "1"], capsys)
        assert payload["value"] == pytest.approx(0.5 * math.log(math.cosh(1.0)))


class TestMeasureSpecs:
    def test_csv_measure(self, files, capsys, tmp_path):
        mcsv = tmp_path / "mu.csv"
        mcsv.write_text("atom,prob\n-1,0.5\n1,0.5\n")
        code, payload = run(["gibbs", "exact-logz", "--family", "ising", "--n", "2",
                             "--theta", "1", "--mu", f"csv:{mcsv}"], capsys)
        assert code == 0
        assert payload["value"] == pytest.approx(0.5 * math.log(math.cosh(1.0)))

    def test_bad_measure_spec(self, files):
        assert main(["gibbs", "exact-logz", "--family", "ising", "--n", "2",
                     "--mu", "bogus"]) == 2
