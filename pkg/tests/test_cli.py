import numpy as np
import pytest
from click.testing import CliRunner

from structflow.cli import main
from structflow.fileio import read_matrix, read_vector, write_matrix, write_vector
from structflow.groups import read_group_file, write_group_file, make_sliding_windows


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, args):
    result = runner.invoke(main, args, catch_exceptions=False)
    return result


def test_gen_writes_files(runner, tmp_path):
    out = tmp_path / "data"
    r = invoke(runner, ["gen", "--seed", "3", "--n", "20", "--p", "30",
                        "--out-dir", str(out)])
    assert r.exit_code == 0
    X = read_matrix(out / "X.csv")
    y = read_vector(out / "y.txt")
    assert X.shape == (20, 30) and y.shape == (20,)
    gs = read_group_file(str(out / "groups.txt"))
    assert gs.p == 30 and gs.n_groups == 28


def test_gen_deterministic(runner, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        invoke(runner, ["gen", "--seed", "7", "--n", "10", "--p", "12",
                        "--out-dir", str(out)])
    assert (a / "X.csv").read_text() == (b / "X.csv").read_text()
    assert (a / "y.txt").read_text() == (b / "y.txt").read_text()


def test_prox_lambda_zero_identity(runner, tmp_path, rng):
    u = rng.normal(0, 1, 9)
    upath = tmp_path / "u.txt"
    write_vector(upath, u)
    out = tmp_path / "w.txt"
    r = invoke(runner, ["prox", "--input", str(upath), "--lam", "0",
                        "--family", "windows", "--window", "3",
                        "--output", str(out)])
    assert r.exit_code == 0
    assert np.array_equal(read_vector(out), u)


def test_prox_with_group_file_and_certificate(runner, tmp_path, rng):
    u = rng.normal(0, 1, 6)
    upath = tmp_path / "u.txt"
    write_vector(upath, u)
    gpath = tmp_path / "groups.txt"
    write_group_file(str(gpath), make_sliding_windows(6, 3))
    out = tmp_path / "w.txt"
    xib = tmp_path / "xi.txt"
    r = invoke(runner, ["prox", "--input", str(upath), "--lam", "0.2",
                        "--groups", str(gpath), "--output", str(out),
                        "--xi-bar", str(xib), "--certify"])
    assert r.exit_code == 0
    assert "ok=True" in r.output
    w = read_vector(out)
    xi = read_vector(xib)
    assert np.max(np.abs(w + xi - u)) <= 1e-12


def test_malformed_group_file_exit_2(runner, tmp_path):
    upath = tmp_path / "u.txt"
    write_vector(upath, np.ones(3))
    gpath = tmp_path / "groups.txt"
    gpath.write_text("1.0 1 2\nbroken line here\n")
    r = runner.invoke(main, ["prox", "--input", str(upath), "--lam", "0.1",
                             "--groups", str(gpath), "--output",
                             str(tmp_path / "w.txt")])
    assert r.exit_code == 2
    assert "line 2" in r.output


def test_groups_xor_family_enforced(runner, tmp_path):
    upath = tmp_path / "u.txt"
    write_vector(upath, np.ones(3))
    r = runner.invoke(main, ["dualnorm", "--input", str(upath)])
    assert r.exit_code == 1
    assert "exactly one" in r.output


def test_dualnorm_value(runner, tmp_path):
    upath = tmp_path / "u.txt"
    write_vector(upath, np.array([1.0, -2.0, 3.0]))
    r = invoke(runner, ["dualnorm", "--input", str(upath),
                        "--family", "singletons"])
    assert r.exit_code == 0
    assert float(r.output.strip()) == pytest.approx(3.0, abs=1e-10)


def test_solve_trace_gap(runner, tmp_path):
    invoke(runner, ["gen", "--seed", "5", "--n", "25", "--p", "40",
                    "--out-dir", str(tmp_path)])
    out = tmp_path / "w.txt"
    trace = tmp_path / "trace.csv"
    r = invoke(runner, ["solve", "--matrix", str(tmp_path / "X.csv"),
                        "--response", str(tmp_path / "y.txt"),
                        "--groups", str(tmp_path / "groups.txt"),
                        "--lam", "0.05", "--solver", "fista",
                        "--gap", "1e-6", "--max-iter", "5000",
                        "--output", str(out), "--trace", str(trace)])
    assert r.exit_code == 0
    lines = trace.read_text().strip().splitlines()
    assert lines[0] == "iter,objective,gap,seconds"
    last_gap = float(lines[-1].split(",")[2])
    assert last_gap <= 1e-6


def test_solve_all_solvers_run(runner, tmp_path):
    invoke(runner, ["gen", "--seed", "6", "--n", "15", "--p", "20",
                    "--out-dir", str(tmp_path)])
    for solver in ("fista", "admm", "lin-admm", "sg"):
        out = tmp_path / f"w_{solver}.txt"
        r = invoke(runner, ["solve", "--matrix", str(tmp_path / "X.csv"),
                            "--response", str(tmp_path / "y.txt"),
                            "--groups", str(tmp_path / "groups.txt"),
                            "--lam", "0.05", "--solver", solver,
                            "--max-iter", "300", "--output", str(out)])
        assert r.exit_code == 0, r.output
        assert out.exists()


def test_bench_writes_csv_and_figure(runner, tmp_path):
    out = tmp_path / "bench.csv"
    fig = tmp_path / "bench.png"
    r = invoke(runner, ["bench", "--seed", "2", "--n", "20", "--p", "40",
                        "--budget", "0.5", "--solvers", "fista,sg",
                        "--out", str(out), "--plot", str(fig)])
    assert r.exit_code == 0, r.output
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "solver,iter,seconds,objective,gap"
    solvers = {l.split(",")[0] for l in lines[1:]}
    assert solvers == {"fista", "sg"}
    assert fig.exists() and fig.stat().st_size > 0


def test_bench_rejects_bad_budget(runner):
    r = CliRunner().invoke(main, ["bench", "--budget", "0"])
    assert r.exit_code == 1


def test_cur_single_and_grid(runner, tmp_path, rng):
    X = rng.normal(0, 1, (8, 6))
    write_matrix(tmp_path / "X.csv", X)
    out = tmp_path / "cur.csv"
    r = invoke(runner, ["cur", "--matrix", str(tmp_path / "X.csv"),
                        "--lrow", "0.01", "--lcol", "0.01",
                        "--out", str(out)])
    assert r.exit_code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "lam_row,lam_col,n_rows,n_cols,variance"
    assert len(lines) == 2
    assert (tmp_path / "cur.png").exists()
    out2 = tmp_path / "grid.csv"
    r = invoke(runner, ["cur", "--matrix", str(tmp_path / "X.csv"),
                        "--grid", "2", "--grid-min", "1e-3",
                        "--grid-max", "0.1", "--out", str(out2)])
    assert r.exit_code == 0
    assert len(out2.read_text().strip().splitlines()) == 5


def test_oracle_golden_regeneration(runner, tmp_path):
    out = tmp_path / "testdata"
    r = invoke(runner, ["oracle", "--out-dir", str(out), "--count", "2",
                        "--seed", "100"])
    assert r.exit_code == 0
    manifest = (out / "manifest.csv").read_text().strip().splitlines()
    assert manifest[0] == "case,p,n_groups,lam,dual_norm"
    assert len(manifest) == 3
    # golden files hold a consistent prox triple
    from structflow.prox import prox_overlapping_linf
    u = read_vector(out / "case000_u.txt")
    w = read_vector(out / "case000_w.txt")
    lam = float((out / "case000_lam.txt").read_text())
    gs = read_group_file(str(out / "case000_groups.txt"))
    res = prox_overlapping_linf(u, gs, lam)
    assert np.max(np.abs(res.w - w)) <= 1e-6
