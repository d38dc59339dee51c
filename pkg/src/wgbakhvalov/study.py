"""Convergence-study driver and table emitters."""

import csv
import io
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from .analysis import convergence_rates, energy_norm, project
from .assembly import SolverError, assemble, solve_system
from .fespace import WeakFunction, default_quad_order
from .mesh import bakhvalov_tensor_mesh
from .problems import EXAMPLES
from .wgops import DEFAULT_PENALTY

log = logging.getLogger(__name__)

CSV_HEADER = ("k", "eps", "N", "error", "rate")


@dataclass
class StudyRow:
    k: int
    eps: float
    N: int
    error: float
    rate: float


@dataclass
class CellInfo:
    """Per-cell bookkeeping: solver residual, timings, or the failure message."""

    k: int
    eps: float
    N: int
    residual: Optional[float] = None
    assemble_time: Optional[float] = None
    solve_time: Optional[float] = None
    n_dofs: Optional[int] = None
    failure: Optional[str] = None


@dataclass
class StudyResult:
    rows: list = field(default_factory=list)
    cells: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def failed(self):
        return [c for c in self.cells if c.failure is not None]

    def errors(self, k, eps):
        return [(r.N, r.error) for r in self.rows if r.k == k and r.eps == eps]


def energy_error(problem, N, k=None, sigma=None, nq=None, condensed=True,
                 penalty=DEFAULT_PENALTY):
    """Solve on an ``N x N`` mesh and return ``(|||Q_N u - u_N|||, CellInfo)``."""
    k = problem.k if k is None else k
    sigma = problem.sigma if sigma is None else sigma
    info = CellInfo(k, problem.eps, N)
    mesh = bakhvalov_tensor_mesh(N, problem.eps, sigma, problem.beta1, problem.beta2)
    t0 = time.perf_counter()
    system = assemble(mesh, problem, k=k, nq=nq, penalty=penalty)
    info.assemble_time = time.perf_counter() - t0
    info.n_dofs = system.size
    x, rep = solve_system(system, condensed=condensed)
    info.residual = rep.relative_residual
    info.solve_time = rep.wall_time
    proj = project(problem.exact_u, mesh, k, nq=nq)
    e = proj.weak - WeakFunction.from_free(x, system.dof_map)
    return energy_norm(e, mesh, problem, nq, penalty), info


def _solve_cell(args):
    problem, N, k, sigma, nq, condensed, penalty = args
    try:
        err, info = energy_error(problem, N, k, sigma, nq, condensed, penalty)
    except (SolverError, FloatingPointError) as exc:
        return None, CellInfo(k, problem.eps, N, failure=str(exc))
    return err, info


def run_study(example, k, Ns, eps_list, sigma=None, nq=None, condensed=True,
              penalty=DEFAULT_PENALTY, jobs=1):
    """Energy errors and rates for every ``(eps, N)`` of one example.

    ``example`` is 1, 2 or a factory ``(eps, k=, sigma=) -> ProblemSpec``.
    ``sigma`` defaults to ``2k``. A failed cell is recorded in
    ``result.cells`` and left out of the rows; the study carries on.
    ``jobs > 1`` solves cells in a thread pool; output order is unchanged.
    """
    factory = EXAMPLES[example] if isinstance(example, int) else example
    sigma = 2.0 * k if sigma is None else float(sigma)
    Ns = [int(n) for n in Ns]
    for n in Ns:
        if n < 4 or n % 2:
            raise ValueError(f"N must be even and >= 4, got {n}")
    convergence_rates([(n, 1.0) for n in Ns])  # rejects non-doubling sequences early
    result = StudyResult(meta={
        "example": getattr(factory, "__name__", str(factory)),
        "k": k, "sigma": sigma, "penalty": penalty, "condensed": condensed,
        "quad_order": default_quad_order(k) if nq is None else nq,
    })
    eps_sorted = sorted(eps_list, reverse=True)
    tasks = [(factory(eps, k=k, sigma=sigma), N, k, sigma, nq, condensed, penalty)
             for eps in eps_sorted for N in Ns]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(_solve_cell, tasks))
    else:
        outcomes = [_solve_cell(t) for t in tasks]
    for eps in eps_sorted:
        errs = []
        for (problem, N, *_), (err, info) in zip(tasks, outcomes):
            if problem.eps != eps:
                continue
            result.cells.append(info)
            if info.failure is not None:
                log.error("cell k=%d eps=%g N=%d failed: %s", k, eps, N, info.failure)
                continue
            log.info("k=%d eps=%g N=%d error=%.3e residual=%.1e", k, eps, N, err,
                     info.residual)
            errs.append((N, err))
        rates = _rates_with_gaps(errs)
        result.rows.extend(StudyRow(k, eps, N, e, r) for (N, e), r in zip(errs, rates))
    return result


def _rates_with_gaps(errs):
    """Rates over the successful cells; a rate across a missing N is reported as 0."""
    rates = []
    for i, (N, e) in enumerate(errs):
        if i > 0 and errs[i - 1][0] * 2 == N:
            rates.append(convergence_rates(errs[i - 1:i + 1])[1])
        else:
            rates.append(0.0)
    return rates


def format_eps(eps):
    """``1e-06`` style, as produced by ``%g``."""
    return "%g" % eps


def format_error(err):
    return "%.2E" % err


def format_rate(rate):
    return "%.2f" % rate


def csv_text(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in result.rows:
        w.writerow([r.k, format_eps(r.eps), r.N, format_error(r.error), format_rate(r.rate)])
    return buf.getvalue()


def write_csv(result, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(csv_text(result))


def read_csv(path):
    """Parse a CSV written by :func:`write_csv` back into rows."""
    with open(path, encoding="utf-8", newline="") as fh:
        rd = csv.reader(fh)
        header = next(rd, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"unexpected header {header!r}")
        return [StudyRow(int(k), float(eps), int(N), float(err), float(rate))
                for k, eps, N, err, rate in rd]


def markdown_table(result):
    """Rows ``N``, columns ``eps``; each cell ``error & rate``, one block per k."""
    lines = []
    for k in sorted({r.k for r in result.rows}):
        rows = [r for r in result.rows if r.k == k]
        eps_cols = sorted({r.eps for r in rows}, reverse=True)
        Ns = sorted({r.N for r in rows})
        lines.append(f"k = {k}")
        lines.append("")
        lines.append("| N | " + " | ".join(f"eps={format_eps(e)} | rate" for e in eps_cols) + " |")
        lines.append("|---|" + "---|---|" * len(eps_cols))
        cell = {(r.eps, r.N): r for r in rows}
        for N in Ns:
            parts = []
            for e in eps_cols:
                r = cell.get((e, N))
                parts += ["-", "-"] if r is None else [format_error(r.error), format_rate(r.rate)]
            lines.append(f"| {N} | " + " | ".join(parts) + " |")
        lines.append("")
    return "\n".join(lines)


def write_markdown(result, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(markdown_table(result))


def write_plot_files(result, directory, stem="study"):
    """One two-column ``N error`` file per ``(k, eps)``; returns the paths."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for k, eps in sorted({(r.k, r.eps) for r in result.rows}, key=lambda t: (t[0], -t[1])):
        path = os.path.join(directory, f"{stem}_k{k}_eps{format_eps(eps)}.dat")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for N, err in result.errors(k, eps):
                fh.write("%d %.17g\n" % (N, err))
        paths.append(path)
    return paths


def emit(result, path, fmt="csv", plot_dir=None):
    """Write ``result`` as ``csv`` or ``md`` and, optionally, the plot files."""
    if fmt == "csv":
        write_csv(result, path)
    elif fmt == "md":
        write_markdown(result, path)
    else:
        raise ValueError(f"unknown format {fmt!r}")
    if plot_dir is not None:
        stem = os.path.splitext(os.path.basename(path))[0]
        return write_plot_files(result, plot_dir, stem)
    return []
