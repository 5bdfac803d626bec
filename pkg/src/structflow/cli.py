"""Command-line front end.

Subcommands: ``gen`` (synthetic problems), ``prox`` and ``dualnorm``
(operator evaluation on files), ``solve`` (one solver run with a trace),
``bench`` (timed solver comparison with a CSV report and a figure),
``cur`` (row/column selection sweeps, CSV + figure), and ``oracle``
(regenerate brute-force golden files).

Vectors, matrices, and group files use the text formats of
:mod:`structflow.fileio` / :mod:`structflow.groups`.  Parse failures exit
with status 2 and name the offending line; other errors exit with status 1.
The ``STRUCTFLOW_THREADS`` environment variable caps internal parallelism.
"""

from __future__ import annotations

import os
import sys

import click
import numpy as np

from . import cur as curmod
from . import datagen, fileio, report
from .duality import LossSpec, dual_norm
from .groups import (GroupFileError, GroupStructure, make_grid_squares,
                     make_singletons, make_sliding_windows, make_tree,
                     read_group_file, write_group_file)
from .oracles import oracle_dual_norm_bisect, oracle_prox_dual
from .prox import prox_overlapping_linf
from .solvers import (Problem, SolverTrace, admm_linearized, admm_loss_split,
                      fista, subgradient)

SOLVERS = ("fista", "admm", "lin-admm", "sg")


def _fail(message: str, code: int = 1):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_vector(path: str) -> np.ndarray:
    try:
        return fileio.read_vector(path)
    except fileio.ParseError as e:
        _fail(f"{path}: {e}", code=2)


def _load_matrix(path: str) -> np.ndarray:
    try:
        return fileio.read_matrix(path)
    except fileio.ParseError as e:
        _fail(f"{path}: {e}", code=2)


def group_options(fn):
    opts = [
        click.option("--groups", "groups_file", type=click.Path(exists=True),
                     default=None, help="Group file (weight idx1 idx2 ...)."),
        click.option("--family",
                     type=click.Choice(["singletons", "windows", "grid", "tree"]),
                     default=None, help="Built-in group family."),
        click.option("--window", type=int, default=3, show_default=True,
                     help="Window width for --family windows."),
        click.option("--grid-h", type=int, default=None),
        click.option("--grid-w", type=int, default=None),
        click.option("--grid-k", type=int, default=3, show_default=True),
        click.option("--cyclic/--no-cyclic", default=False,
                     help="Wrap grid neighborhoods at the borders."),
        click.option("--parents", "parents_file", type=click.Path(exists=True),
                     default=None, help="Parent array file for --family tree."),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _resolve_groups(p: int, groups_file, family, window, grid_h, grid_w,
                    grid_k, cyclic, parents_file) -> GroupStructure:
    if (groups_file is None) == (family is None):
        _fail("give exactly one of --groups or --family")
    if groups_file is not None:
        try:
            return read_group_file(groups_file, p=p)
        except GroupFileError as e:
            _fail(f"{groups_file}: {e}", code=2)
    if family == "singletons":
        return make_singletons(p)
    if family == "windows":
        return make_sliding_windows(p, window)
    if family == "grid":
        h = grid_h or int(round(np.sqrt(p)))
        w = grid_w or (p // h)
        if h * w != p:
            _fail(f"grid {h}x{w} does not match p={p}")
        return make_grid_squares(h, w, grid_k, cyclic)
    parents = _load_vector(parents_file).astype(int)
    return make_tree(parents.tolist())


@click.group()
def main():
    """Structured-sparsity optimization toolkit."""


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, required=True)
@click.option("--p", type=int, required=True)
@click.option("--family", type=click.Choice(list(datagen.FAMILIES)),
              default="windows3", show_default=True)
@click.option("--sparsity", type=float, default=0.2, show_default=True)
@click.option("--noise", type=float, default=0.1, show_default=True)
@click.option("--out-dir", type=click.Path(), default=".", show_default=True)
def gen(seed, n, p, family, sparsity, noise, out_dir):
    """Generate X, y, w0 and a group file for a synthetic problem."""
    X, y, w0, gs = datagen.gen_problem(seed, n, p, family, sparsity, noise)
    os.makedirs(out_dir, exist_ok=True)
    fileio.write_matrix(os.path.join(out_dir, "X.csv"), X)
    fileio.write_vector(os.path.join(out_dir, "y.txt"), y)
    fileio.write_vector(os.path.join(out_dir, "w0.txt"), w0)
    write_group_file(os.path.join(out_dir, "groups.txt"), gs)
    click.echo(f"wrote X.csv ({n}x{p}), y.txt, w0.txt, groups.txt to {out_dir}")


@main.command("prox")
@click.option("--input", "input_file", type=click.Path(exists=True), required=True,
              help="Input vector, one value per line.")
@click.option("--lam", type=float, required=True)
@click.option("--output", type=click.Path(), required=True)
@click.option("--xi-bar", "xi_file", type=click.Path(), default=None,
              help="Also write the aggregate dual vector.")
@click.option("--certify/--no-certify", default=False,
              help="Check the per-group optimality conditions.")
@group_options
def prox_cmd(input_file, lam, output, xi_file, certify, **gopts):
    """Exact prox of the overlapping l-inf penalty on a vector file."""
    u = _load_vector(input_file)
    gs = _resolve_groups(len(u), **gopts)
    res = prox_overlapping_linf(u, gs, lam, certify=certify)
    fileio.write_vector(output, res.w)
    if xi_file:
        fileio.write_vector(xi_file, res.xi_bar)
    if certify:
        cert = res.certificate
        click.echo(f"certificate: ok={cert.ok} "
                   f"max_violation={cert.max_violation:.3e} tol={cert.tol:.3e}")
        if not cert.ok:
            sys.exit(1)


@main.command("dualnorm")
@click.option("--input", "input_file", type=click.Path(exists=True), required=True)
@group_options
def dualnorm_cmd(input_file, **gopts):
    """Dual norm of the overlapping l-inf penalty at a vector."""
    kappa = _load_vector(input_file)
    gs = _resolve_groups(len(kappa), **gopts)
    click.echo("%.17g" % dual_norm(kappa, gs))


def _load_problem(matrix, response, lam, loss_kind, norm, gopts) -> Problem:
    X = _load_matrix(matrix)
    y = _load_vector(response)
    gs = _resolve_groups(X.shape[1], **gopts)
    return Problem(X=X, loss=LossSpec(loss_kind, y), lam=lam, gs=gs, norm=norm)


def run_solver(problem: Problem, solver: str, *, gap: float = 1e-6,
               gamma: float = 1.0, delta: float | None = None,
               a: float = 0.1, b: float = 100.0, max_iter: int = 5000,
               max_seconds: float | None = None,
               record_every: int = 1) -> tuple[np.ndarray, SolverTrace]:
    if solver == "fista":
        return fista(problem, eps_gap=gap, max_iter=max_iter,
                     max_seconds=max_seconds)
    if solver == "admm":
        return admm_loss_split(problem, gamma=gamma, max_iter=max_iter,
                               tol=gap, max_seconds=max_seconds,
                               record_every=record_every)
    if solver == "lin-admm":
        return admm_linearized(problem, gamma=gamma, delta=delta,
                               max_iter=max_iter, tol=gap,
                               max_seconds=max_seconds,
                               record_every=record_every)
    if solver == "sg":
        return subgradient(problem, a=a, b=b, max_iter=max_iter,
                           max_seconds=max_seconds, record_every=record_every)
    raise ValueError(f"unknown solver {solver!r}")


@main.command("solve")
@click.option("--matrix", type=click.Path(exists=True), required=True)
@click.option("--response", type=click.Path(exists=True), required=True)
@click.option("--lam", type=float, required=True)
@click.option("--solver", type=click.Choice(list(SOLVERS)), default="fista",
              show_default=True)
@click.option("--loss", "loss_kind", type=click.Choice(["square", "logistic"]),
              default="square", show_default=True)
@click.option("--norm", type=click.Choice(["linf", "l2"]), default="linf",
              show_default=True)
@click.option("--gap", type=float, default=1e-6, show_default=True,
              help="Duality-gap target (fista) or residual tolerance (admm).")
@click.option("--gamma", type=float, default=1.0, show_default=True)
@click.option("--delta", type=float, default=None)
@click.option("--a", type=float, default=0.1, show_default=True)
@click.option("--b", type=float, default=100.0, show_default=True)
@click.option("--max-iter", type=int, default=5000, show_default=True)
@click.option("--output", type=click.Path(), required=True)
@click.option("--trace", "trace_file", type=click.Path(), default=None,
              help="Write the per-iteration CSV trace here.")
@group_options
def solve_cmd(matrix, response, lam, solver, loss_kind, norm, gap, gamma,
              delta, a, b, max_iter, output, trace_file, **gopts):
    """Solve a regularized regression problem from files."""
    problem = _load_problem(matrix, response, lam, loss_kind, norm, gopts)
    w, trace = run_solver(problem, solver, gap=gap, gamma=gamma, delta=delta,
                          a=a, b=b, max_iter=max_iter)
    fileio.write_vector(output, w)
    if trace_file:
        with open(trace_file, "w") as f:
            trace.write_csv(f)
    click.echo(f"{solver}: status={trace.status} "
               f"objective={trace.final_objective:.12g} "
               f"gap={trace.final_gap:.3e}")


def bench_run(problem: Problem, solvers, budget: float, *,
              solver_params: dict | None = None) -> tuple[list[dict], float]:
    """Run each solver under a wall-clock budget; collect (time, objective).

    Returns per-record dicts and the optimal-value proxy: the best objective
    across all runs minus the certified duality gap at the best iterate.
    """
    params = solver_params or {}
    records: list[dict] = []
    best_obj = np.inf
    best_w = None
    for name in solvers:
        w, trace = run_solver(problem, name, max_seconds=budget,
                              max_iter=10**9, gap=1e-12,
                              record_every=1, **params.get(name, {}))
        for it, obj, gap, sec in zip(trace.iterations, trace.objectives,
                                     trace.gaps, trace.seconds):
            records.append({"solver": name, "iter": it, "seconds": sec,
                            "objective": obj, "gap": gap})
        final = problem.objective(w)
        if final < best_obj:
            best_obj, best_w = final, w
    cert_gap = problem.gap(best_w)
    return records, best_obj - max(cert_gap, 0.0)


@main.command("bench")
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--n", type=int, default=100, show_default=True)
@click.option("--p", type=int, default=1000, show_default=True)
@click.option("--family", type=click.Choice(list(datagen.FAMILIES)),
              default="windows3", show_default=True)
@click.option("--sparsity", type=float, default=0.2, show_default=True)
@click.option("--lam", type=float, default=None,
              help="Regularization level; defaults to 0.1 * lam_max.")
@click.option("--budget", type=float, default=5.0, show_default=True,
              help="Wall-clock seconds per solver.")
@click.option("--solvers", default="fista,sg", show_default=True,
              help="Comma-separated subset of fista,admm,lin-admm,sg.")
@click.option("--out", type=click.Path(), default="bench.csv", show_default=True)
@click.option("--plot", type=click.Path(), default=None,
              help="Figure path; defaults to the CSV path with .png.")
def bench_cmd(seed, n, p, family, sparsity, lam, budget, solvers, out, plot):
    """Objective-versus-time comparison on a generated problem."""
    if budget <= 0:
        _fail("budget must be positive")
    names = [s.strip() for s in solvers.split(",") if s.strip()]
    for s in names:
        if s not in SOLVERS:
            _fail(f"unknown solver {s!r}")
    X, y, w0, gs = datagen.gen_problem(seed, n, p, family, sparsity)
    loss = LossSpec("square", y)
    if lam is None:
        lam = 0.1 * dual_norm(X.T @ loss.grad(np.zeros(n)), gs)
    problem = Problem(X=X, loss=loss, lam=lam, gs=gs, norm="linf")
    records, optimum = bench_run(problem, names, budget)
    with open(out, "w") as f:
        f.write("solver,iter,seconds,objective,gap\n")
        for r in records:
            gtxt = "" if np.isnan(r["gap"]) else "%.17g" % r["gap"]
            f.write("%s,%d,%.6f,%.17g,%s\n"
                    % (r["solver"], r["iter"], r["seconds"], r["objective"], gtxt))
    curves = {}
    for name in names:
        rs = [r for r in records if r["solver"] == name]
        curves[name] = (np.array([r["seconds"] for r in rs]),
                        np.array([r["objective"] for r in rs]))
    figure = plot or os.path.splitext(out)[0] + ".png"
    report.plot_bench(curves, optimum, figure,
                      title=f"n={n} p={p} lam={lam:.3g}")
    click.echo(f"wrote {out} and {figure}; optimum proxy {optimum:.12g}")


@main.command("cur")
@click.option("--matrix", type=click.Path(exists=True), required=True)
@click.option("--lrow", type=float, default=None, help="Single row penalty.")
@click.option("--lcol", type=float, default=None, help="Single column penalty.")
@click.option("--grid", type=int, default=None,
              help="Sweep a grid x grid log-spaced penalty grid instead.")
@click.option("--grid-min", type=float, default=1e-4, show_default=True)
@click.option("--grid-max", type=float, default=1.0, show_default=True)
@click.option("--out", type=click.Path(), default="cur.csv", show_default=True)
@click.option("--plot", type=click.Path(), default=None)
def cur_cmd(matrix, lrow, lcol, grid, grid_min, grid_max, out, plot):
    """Row/column selection: a single solve or a penalty-grid sweep."""
    X = _load_matrix(matrix)
    if grid is not None:
        lams = np.geomspace(grid_min, grid_max, grid)
        records = curmod.cur_grid(X, lams, lams)
    elif lrow is not None and lcol is not None:
        res = curmod.cur_solve(X, lrow, lcol)
        records = [{"lam_row": lrow, "lam_col": lcol, "n_rows": len(res.I),
                    "n_cols": len(res.J), "variance": res.refit_variance,
                    "variance_shrunk": res.explained_variance}]
    else:
        _fail("give --lrow and --lcol, or --grid N")
    with open(out, "w") as f:
        f.write("lam_row,lam_col,n_rows,n_cols,variance\n")
        for r in records:
            f.write("%.17g,%.17g,%d,%d,%.17g\n"
                    % (r["lam_row"], r["lam_col"], r["n_rows"], r["n_cols"],
                       r["variance"]))
    figure = plot or os.path.splitext(out)[0] + ".png"
    report.plot_cur_grid(records, figure)
    click.echo(f"wrote {out} and {figure}")


@main.command("oracle")
@click.option("--out-dir", type=click.Path(), default="testdata",
              show_default=True)
@click.option("--count", type=int, default=5, show_default=True)
@click.option("--seed", type=int, default=1000, show_default=True)
def oracle_cmd(out_dir, count, seed, ):
    """Regenerate brute-force golden files for seeded random instances."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = os.path.join(out_dir, "manifest.csv")
    with open(manifest, "w") as mf:
        mf.write("case,p,n_groups,lam,dual_norm\n")
        for i in range(count):
            rng = datagen.rng_for(seed + i)
            p = int(rng.integers(4, 16))
            m = int(rng.integers(2, 7))
            groups = []
            for _ in range(m):
                size = int(rng.integers(1, p + 1))
                groups.append(tuple(sorted(
                    rng.choice(p, size=size, replace=False) + 1)))
            gs = GroupStructure(p, tuple(groups), rng.random(m) + 0.5)
            u = rng.normal(0, 1, p)
            lam = float(10 ** rng.uniform(-1.5, 0.5))
            res = oracle_prox_dual(u, gs, lam)
            dn = oracle_dual_norm_bisect(u, gs, tol=1e-10)
            tag = f"case{i:03d}"
            write_group_file(os.path.join(out_dir, f"{tag}_groups.txt"), gs)
            fileio.write_vector(os.path.join(out_dir, f"{tag}_u.txt"), u)
            fileio.write_vector(os.path.join(out_dir, f"{tag}_w.txt"), res.w)
            with open(os.path.join(out_dir, f"{tag}_lam.txt"), "w") as f:
                f.write("%.17g\n" % lam)
            mf.write("%s,%d,%d,%.17g,%.17g\n" % (tag, p, m, lam, dn))
    click.echo(f"wrote {count} golden cases to {out_dir}")


if __name__ == "__main__":
    main()
