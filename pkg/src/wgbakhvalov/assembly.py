"""Global sparse assembly, static condensation and direct solves."""

import logging
import time
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fespace import build_dof_map, default_quad_order
from .wgops import DEFAULT_PENALTY, local_system, penalty_weights

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class CondensationError(SolverError):
    pass


@dataclass
class SparseSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    dof_map: object

    @property
    def size(self):
        return self.matrix.shape[0]


@dataclass
class SolveReport:
    relative_residual: float
    min_pivot: float
    max_pivot: float
    wall_time: float
    condensed: bool = False


def scatter_local(dof_map, local_mats, local_vecs=None):
    """Sum element blocks into a CSR matrix (and vector) over the free DOFs.

    Entries are summed in fixed element order; coupling entries that happen
    to be numerically zero are kept so the pattern is purely structural.
    """
    dofs = dof_map.element_dofs
    nel, nloc = dofs.shape
    rows = np.broadcast_to(dofs[:, :, None], (nel, nloc, nloc)).ravel()
    cols = np.broadcast_to(dofs[:, None, :], (nel, nloc, nloc)).ravel()
    keep = (rows >= 0) & (cols >= 0)
    n = dof_map.n_free
    A = sp.coo_matrix((local_mats.ravel()[keep], (rows[keep], cols[keep])), shape=(n, n)).tocsr()
    A.sort_indices()
    if local_vecs is None:
        return A
    d = dofs.ravel()
    m = d >= 0
    F = np.bincount(d[m], weights=local_vecs.ravel()[m], minlength=n)
    return A, F


def assemble(mesh, problem, k=None, nq=None, theta=None, penalty=DEFAULT_PENALTY):
    """Assemble the WG system on the free DOFs of ``mesh``.

    ``theta`` overrides the penalty weights given by ``penalty``.
    """
    k = problem.k if k is None else k
    if problem.eps != mesh.mesh_x.eps or problem.eps != mesh.mesh_y.eps:
        raise ValueError("mesh and problem were built for different eps")
    if min(mesh.mesh_x.sigma, mesh.mesh_y.sigma) < k + 1:
        warnings.warn(f"mesh sigma {mesh.mesh_x.sigma} < k+1 = {k + 1}; uniform "
                      "convergence is not guaranteed", stacklevel=2)
    nq = default_quad_order(k) if nq is None else nq
    dof_map = build_dof_map(mesh, k)
    if theta is None:
        theta = penalty_weights(mesh, problem.eps, penalty)
    A_loc, F_loc = local_system(mesh, k, problem, theta=theta, nq=nq)
    A, F = scatter_local(dof_map, A_loc, F_loc)
    return SparseSystem(A, F, dof_map)


def expected_nnz(mesh, k):
    """Closed-form nonzero count of the coupling pattern."""
    n = k + 1
    n_free_edges = (~mesh.boundary[mesh.element_edges]).sum(axis=1)
    nloc = n * n + n_free_edges * n
    return int((nloc**2).sum() - (~mesh.boundary).sum() * n * n)


@dataclass
class Recovery:
    n_interior: int
    block: int
    inv_blocks: np.ndarray  # (n_blocks, block, block)
    A_ib: sp.csr_matrix
    rhs_i: np.ndarray

    def interior(self, x_b):
        r = (self.rhs_i - self.A_ib @ x_b).reshape(-1, self.block)
        return np.einsum("lab,lb->la", self.inv_blocks, r).ravel()

    def full(self, x_b):
        return np.concatenate([self.interior(x_b), x_b])


def _diagonal_blocks(A_ii, block):
    coo = A_ii.tocoo()
    nb = A_ii.shape[0] // block
    out = np.zeros((nb, block, block))
    same = coo.row // block == coo.col // block
    r, c = coo.row[same], coo.col[same]
    np.add.at(out, (r // block, r % block, c % block), coo.data[same])
    off = np.abs(coo.data[~same])
    if off.size and off.max() > 0:
        raise CondensationError("interior block is not block diagonal")
    return out


def condense(system, n_interior=None, block=None):
    """Eliminate the element-interior DOFs by a Schur complement.

    Returns ``(edge_system, recovery)``; ``recovery.full(x_b)`` rebuilds
    the full coefficient vector from a solution of the edge system.
    """
    dm = system.dof_map
    if n_interior is None:
        n_interior, block = dm.n_interior, dm.n_interior_block
    A = system.matrix.tocsr()
    nI = n_interior
    A_ii = A[:nI, :nI]
    A_ib = A[:nI, nI:].tocsr()
    A_bi = A[nI:, :nI].tocsr()
    A_bb = A[nI:, nI:].tocsr()
    blocks = _diagonal_blocks(A_ii, block)
    try:
        inv = np.linalg.inv(blocks)
    except np.linalg.LinAlgError as exc:
        raise CondensationError(f"singular interior block: {exc}") from None
    if not np.all(np.isfinite(inv)):
        raise CondensationError("non-finite inverse of an interior block")
    inv_sp = _block_diag_csr(inv)
    S = (A_bb - A_bi @ (inv_sp @ A_ib)).tocsr()
    S.sort_indices()
    g = system.rhs[nI:] - A_bi @ (inv_sp @ system.rhs[:nI])
    rec = Recovery(nI, block, inv, A_ib, system.rhs[:nI].copy())
    return SparseSystem(S, g, dm), rec


def _block_diag_csr(blocks):
    nb, m, _ = blocks.shape
    indptr = np.arange(nb * m + 1) * m
    cols = (np.arange(nb)[:, None, None] * m + np.arange(m)[None, None, :]) + np.zeros((1, m, 1), int)
    return sp.csr_matrix((blocks.ravel(), cols.ravel(), indptr), shape=(nb * m, nb * m))


def solve(system, max_residual=1e-8, equilibrate=True):
    """Sparse LU with row/column max-magnitude equilibration.

    Returns ``(x, report)``; raises :class:`SolverError` for a singular
    factorization or a relative residual above ``max_residual``.
    """
    t0 = time.perf_counter()
    A = system.matrix.tocsc()
    b = np.asarray(system.rhs, dtype=float)
    n = A.shape[0]
    if equilibrate:
        r = abs(A).max(axis=1).toarray().ravel()
        if np.any(r == 0):
            raise SolverError(f"zero row at index {int(np.flatnonzero(r == 0)[0])}")
        R = 1.0 / r
        As = sp.diags(R) @ A
        c = abs(As).max(axis=0).toarray().ravel()
        C = 1.0 / c
        As = (As @ sp.diags(C)).tocsc()
    else:
        R = C = np.ones(n)
        As = A
    try:
        lu = spla.splu(As, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise SolverError(f"factorization failed: {exc}") from None
    piv = np.abs(lu.U.diagonal())
    if piv.size and piv.min() == 0:
        raise SolverError(f"zero pivot at position {int(np.argmin(piv))}")
    x = C * lu.solve(R * b)
    nb = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b) / (nb if nb > 0 else 1.0)
    report = SolveReport(
        relative_residual=float(res),
        min_pivot=float(piv.min()) if piv.size else 0.0,
        max_pivot=float(piv.max()) if piv.size else 0.0,
        wall_time=time.perf_counter() - t0,
    )
    if not np.isfinite(res) or res > max_residual:
        raise SolverError(f"relative residual {res:.3e} exceeds {max_residual:.1e}")
    return x, report


def solve_system(system, condensed=True, max_residual=1e-8):
    """Solve with or without static condensation; residual is for the full system."""
    if not condensed:
        return solve(system, max_residual)
    t0 = time.perf_counter()
    edge_sys, rec = condense(system)
    x_b, rep = solve(edge_sys, max_residual)
    x = rec.full(x_b)
    nb = np.linalg.norm(system.rhs)
    res = np.linalg.norm(system.matrix @ x - system.rhs) / (nb if nb > 0 else 1.0)
    if not np.isfinite(res) or res > max_residual:
        raise SolverError(f"relative residual {res:.3e} exceeds {max_residual:.1e}")
    rep.relative_residual = float(res)
    rep.wall_time = time.perf_counter() - t0
    rep.condensed = True
    return x, rep


def write_matrix_market(path, matrix, comment=None):
    """Coordinate real general format, 1-based indices, ``%.17g`` values."""
    coo = sp.coo_matrix(matrix)
    order = np.lexsort((coo.col, coo.row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{coo.shape[0]} {coo.shape[1]} {coo.nnz}\n")
        for i in order:
            fh.write("%d %d %.17g\n" % (coo.row[i] + 1, coo.col[i] + 1, coo.data[i]))


def write_vector(path, vec):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("%%MatrixMarket matrix array real general\n")
        fh.write(f"{vec.size} 1\n")
        for v in vec:
            fh.write("%.17g\n" % v)
