import csv
import json

import numpy as np
import pytest

from matcomp.cli import main
from matcomp.formats import read_factors, read_mtx


def gen(tmp_path, name="g", *extra):
    out = tmp_path / name
    code = main(["generate", "--m", "100", "--n", "100", "--r", "3", "--sigma", "1,1.1,1.2",
                 "--model", "uniform", "--num-revealed", "3000", "--seed", "7",
                 "--output", str(out), *extra])
    return code, out


def test_generate_byte_identical(tmp_path):
    code, one = gen(tmp_path, "one")
    assert code == 0
    _, two = gen(tmp_path, "two")
    for name in ("factors.txt", "observed.mtx"):
        assert (one / name).read_bytes() == (two / name).read_bytes()
    a = read_mtx(one / "observed.mtx")
    assert a.nnz == 3000 and a.meta["seed"] == 7
    np.testing.assert_array_equal(read_factors(one / "factors.txt").sigma, [1.2, 1.1, 1.0])


def test_generate_heavytail(tmp_path):
    code = main(["generate", "--n", "300", "--r", "3", "--model", "heavytail", "--eps", "30",
                 "--seed", "1", "--output", str(tmp_path)])
    assert code == 0
    a = read_mtx(tmp_path / "observed.mtx")
    assert a.meta["model"] == "heavy_tail_rows"
    assert abs(a.nnz / 300 - 30) < 5


def test_usage_errors_exit_1(tmp_path, capsys):
    assert main(["generate", "--n", "10", "--r", "2", "--num-revealed", "101",
                 "--output", str(tmp_path)]) == 1
    assert "num-revealed" in capsys.readouterr().err
    with pytest.raises(SystemExit) as exc:
        main(["generate", "--n", "10"])
    assert exc.value.code == 1
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 1
    assert main(["generate", "--n", "20000", "--r", "2", "--eps", "3"]) == 1


def test_data_errors_exit_2(tmp_path):
    assert main(["complete", "--observed", str(tmp_path / "none.mtx"), "--r", "2"]) == 2
    (tmp_path / "bad.mtx").write_text("garbage\n")
    assert main(["complete", "--observed", str(tmp_path / "bad.mtx"), "--r", "2"]) == 2


def test_numerical_failure_exit_3(tmp_path):
    (tmp_path / "d.mtx").write_text(
        "%%MatrixMarket matrix coordinate real general\n5 5 3\n1 1 1.0\n2 2 2.0\n3 3 3.0\n")
    out = tmp_path / "out"
    assert main(["complete", "--observed", str(tmp_path / "d.mtx"), "--r", "2",
                 "--output", str(out)]) == 3
    rec = json.loads((out / "run.json").read_text())
    assert rec["cleaning"]["degenerate"] and rec["failure"]


def test_complete_outputs(tmp_path):
    _, g = gen(tmp_path)
    out = tmp_path / "c"
    code = main(["complete", "--observed", str(g / "observed.mtx"), "--r", "3",
                 "--truth", str(g / "factors.txt"), "--output", str(out)])
    assert code == 0
    rec = json.loads((out / "run.json").read_text())
    assert rec["error"]["rel_frobenius"] <= 1e-6
    assert rec["schema_version"] == 1
    with open(out / "trace.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["iter", "F", "G", "grad_norm", "dist_to_x0", "step"]
    assert read_factors(out / "reconstruction.txt").r == 3


def test_complete_skip_clean_and_sweep(tmp_path):
    _, g = gen(tmp_path)
    out = tmp_path / "s"
    assert main(["complete", "--observed", str(g / "observed.mtx"), "--rank-sweep", "1,4",
                 "--skip-clean", "--output", str(out)]) == 0
    rec = json.loads((out / "run.json").read_text())
    assert rec["extra"]["r"] == 3 and rec["cleaning"] is None
    assert not (out / "trace.csv").exists()
    assert main(["complete", "--observed", str(g / "observed.mtx"), "--r", "3",
                 "--rank-sweep", "1,2"]) == 1
    assert main(["complete", "--observed", str(g / "observed.mtx"), "--r", "200"]) == 1


def test_config_file(tmp_path):
    cfg = tmp_path / "gen.cfg"
    cfg.write_text("# generation defaults\nn = 100\nr = 3\nsigma = 1,1.1,1.2\n"
                   "num-revealed = 3000\nseed = 7\n")
    assert main(["generate", "--config", str(cfg), "--output", str(tmp_path / "a")]) == 0
    _, ref = gen(tmp_path, "ref")
    assert (tmp_path / "a" / "observed.mtx").read_bytes() == (ref / "observed.mtx").read_bytes()
    # command-line flags win over the file
    assert main(["generate", "--config", str(cfg), "--seed", "8",
                 "--output", str(tmp_path / "b")]) == 0
    assert (tmp_path / "b" / "observed.mtx").read_bytes() != (ref / "observed.mtx").read_bytes()
    (tmp_path / "bad.cfg").write_text("colour = blue\n")
    assert main(["generate", "--config", str(tmp_path / "bad.cfg"), "--n", "5", "--r", "1"]) == 1
    assert main(["generate", "--config", str(tmp_path / "missing.cfg")]) == 2


def test_spectrum_outputs(tmp_path):
    _, g = gen(tmp_path)
    out = tmp_path / "sp"
    assert main(["spectrum", "--observed", str(g / "observed.mtx"), "--truth",
                 str(g / "factors.txt"), "--output", str(out)]) == 0
    for name in ("sigma.csv", "spectrum_before.csv", "spectrum_after.csv",
                 "degrees_row.csv", "degrees_col.csv", "diagnostics.json"):
        assert (out / name).exists()
    diag = json.loads((out / "diagnostics.json").read_text())
    assert len(diag["sigma_after"]) == 10 and "diagnostics" in diag


def test_experiment_deterministic(tmp_path):
    def run(name, threads):
        return main(["experiment", "--kind", "rmse_scaling", "--n", "150", "--r", "2",
                     "--eps", "10,20", "--seeds", "0-1", "--threads", str(threads),
                     "--output", str(tmp_path / name)])

    assert run("a", 1) == 0 and run("b", 2) == 0
    a = json.loads((tmp_path / "a" / "summary.json").read_text())
    b = json.loads((tmp_path / "b" / "summary.json").read_text())
    for d in (a, b):
        d["spec"].pop("output"), d["spec"].pop("threads")
    assert a == b
    names = sorted(p.name for p in (tmp_path / "a" / "runs").iterdir())
    assert names == sorted(p.name for p in (tmp_path / "b" / "runs").iterdir())
    for name in names:
        ra = json.loads((tmp_path / "a" / "runs" / name).read_text())
        rb = json.loads((tmp_path / "b" / "runs" / name).read_text())
        ra.pop("timings"), rb.pop("timings")
        assert ra == rb
    assert (tmp_path / "a" / "summary.csv").read_bytes() == (tmp_path / "b" / "summary.csv").read_bytes()
    assert main(["experiment", "--kind", "rmse_scaling", "--n", "150", "--r", "2",
                 "--seeds", "0", "--output", str(tmp_path / "c")]) == 1
