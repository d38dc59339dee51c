"""Legendre bases, Gauss-Legendre quadrature and DOF layout for weak functions.

Element interior functions are tensor products ``L_i(xi) L_j(eta)`` of
unnormalized Legendre polynomials in reference coordinates on [-1, 1]^2,
local index ``a = j*(k+1) + i``. Edge functions are ``L_m(s)`` where ``s``
runs in the direction of increasing global x (edges parallel to x) or y
(edges parallel to y), so both neighbours of an edge see the same basis.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import PARALLEL_X

MAX_QUAD_ORDER = 30

# slot order of the four element edges
BOTTOM, RIGHT, TOP, LEFT = range(4)
EDGE_NORMALS = np.array([[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]])


@dataclass(frozen=True)
class QuadratureRule:
    order: int
    points: np.ndarray
    weights: np.ndarray


def legendre(n, x):
    """Values and derivatives of P_0..P_n at ``x``; shapes ``(n+1, *x.shape)``."""
    x = np.asarray(x, dtype=float)
    P = np.zeros((n + 1,) + x.shape)
    dP = np.zeros_like(P)
    P[0] = 1.0
    if n >= 1:
        P[1] = x
        dP[1] = 1.0
    for m in range(1, n):
        P[m + 1] = ((2 * m + 1) * x * P[m] - m * P[m - 1]) / (m + 1)
        dP[m + 1] = dP[m - 1] + (2 * m + 1) * P[m]
    return P, dP


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre rule with ``n`` points on [-1, 1] via Newton iteration."""
    if int(n) != n or not 1 <= n <= MAX_QUAD_ORDER:
        raise ValueError(f"quadrature order must be in [1, {MAX_QUAD_ORDER}], got {n!r}")
    n = int(n)
    m = np.arange(1, n + 1)
    x = np.cos(np.pi * (m - 0.25) / (n + 0.5))
    for _ in range(100):
        P, dP = legendre(n, x)
        dx = P[n] / dP[n]
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    P, dP = legendre(n, x)
    w = 2.0 / ((1.0 - x**2) * dP[n] ** 2)
    order = np.argsort(x)
    x, w = x[order], w[order]
    # enforce exact symmetry
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    x.setflags(write=False)
    w.setflags(write=False)
    return QuadratureRule(order=n, points=x, weights=w)


def default_quad_order(k):
    return max(k + 2, 6)


def legendre_norms(k):
    """``int_{-1}^{1} L_i^2 = 2/(2i+1)`` for i = 0..k."""
    return 2.0 / (2.0 * np.arange(k + 1) + 1.0)


def eval_element_basis(k, element, point):
    """Interior basis values and physical gradients at one point.

    ``element`` is ``((x0, x1), (y0, y1))``. Returns ``(values, gradients)``
    with shapes ``((k+1)**2,)`` and ``((k+1)**2, 2)``.
    """
    (x0, x1), (y0, y1) = element
    hx, hy = x1 - x0, y1 - y0
    xi = 2.0 * (point[0] - x0) / hx - 1.0
    eta = 2.0 * (point[1] - y0) / hy - 1.0
    Px, dPx = legendre(k, xi)
    Py, dPy = legendre(k, eta)
    values = np.outer(Py, Px).ravel()
    gx = np.outer(Py, dPx).ravel() * (2.0 / hx)
    gy = np.outer(dPy, Px).ravel() * (2.0 / hy)
    return values, np.stack([gx, gy], axis=1)


class ReferenceTables:
    """Basis tables on the reference square for degree ``k`` and ``nq`` points.

    Local weak-function layout: ``n0 = (k+1)^2`` interior coefficients
    followed by four edge blocks of ``k+1`` (bottom, right, top, left).
    """

    def __init__(self, k, nq):
        self.k = k
        self.n = n = k + 1
        self.n0 = n * n
        self.nloc = self.n0 + 4 * n
        self.rule = rule = gauss_legendre(nq)
        s, w = rule.points, rule.weights
        self.nq = nq
        P, dP = legendre(k, s)  # (n, nq)
        self.L = P
        # volume: quadrature node q = qy*nq + qx
        self.w2 = np.outer(w, w).ravel()
        self.qxi = np.tile(s, nq)
        self.qeta = np.repeat(s, nq)
        self.phi = np.einsum("jb,ia->baji", P, P).reshape(nq * nq, self.n0)  # [q, a]
        self.dphi_dxi = np.einsum("jb,ia->baji", P, dP).reshape(nq * nq, self.n0)
        self.dphi_deta = np.einsum("jb,ia->baji", dP, P).reshape(nq * nq, self.n0)
        self.mass = np.outer(legendre_norms(k), legendre_norms(k)).ravel()  # reference diag
        self.edge_norms = legendre_norms(k)

        # edges: reference coordinates of quadrature points per slot
        one = np.ones(nq)
        self.edge_xi = np.stack([s, one, s, -one])
        self.edge_eta = np.stack([-one, s, one, s])
        # interior basis traces on each edge [slot, p, a]
        tr = np.empty((4, nq, self.n0))
        for e in range(4):
            Px, _ = legendre(k, self.edge_xi[e])
            Py, _ = legendre(k, self.edge_eta[e])
            tr[e] = np.einsum("jp,ip->pji", Py, Px).reshape(nq, self.n0)
        self.trace = tr
        # jump operator v0 - vb at edge points [slot, p, loc]
        J = np.zeros((4, nq, self.nloc))
        for e in range(4):
            J[e, :, : self.n0] = tr[e]
            J[e, :, self.edge_slice(e)] = -P.T
        self.jump = J
        self.w = w

        # weak gradient moments on the reference square (scaled later by h/2)
        self.grad_x_ref, self.grad_y_ref = self._weak_grad_ref()

    def edge_slice(self, slot):
        return slice(self.n0 + slot * self.n, self.n0 + (slot + 1) * self.n)

    def _weak_grad_ref(self):
        """Right-hand sides of the weak gradient on [-1,1]^2 per component.

        Row a tests against q = phi_a e_c; column = local DOF. Physical
        moments are ``(h_perp/2) * ref``.
        """
        w2 = self.w2
        Bx = np.zeros((self.n0, self.nloc))
        By = np.zeros((self.n0, self.nloc))
        Bx[:, : self.n0] = -np.einsum("q,qa,qb->ab", w2, self.dphi_dxi, self.phi)
        By[:, : self.n0] = -np.einsum("q,qa,qb->ab", w2, self.dphi_deta, self.phi)
        for e in range(4):
            nx, ny = EDGE_NORMALS[e]
            m = np.einsum("p,pa,mp->am", self.w, self.trace[e], self.L)
            if nx:
                Bx[:, self.edge_slice(e)] += nx * m
            if ny:
                By[:, self.edge_slice(e)] += ny * m
        return Bx, By


@lru_cache(maxsize=None)
def reference_tables(k, nq):
    return ReferenceTables(k, nq)


@dataclass(frozen=True)
class DofMap:
    """Global numbering of free DOFs.

    Interior DOFs come first (element-major), then the DOFs of interior
    edges in edge-id order. Boundary edges carry no free DOFs.
    """

    k: int
    n_elements: int
    n_edges: int
    element_offsets: np.ndarray  # (n_elements,)
    edge_offsets: np.ndarray  # (n_edges,), -1 on boundary edges
    boundary_mask: np.ndarray  # (n_edges,) bool
    element_dofs: np.ndarray  # (n_elements, nloc), -1 where constrained

    @property
    def n_interior_block(self):
        return (self.k + 1) ** 2

    @property
    def n_interior(self):
        return self.n_elements * self.n_interior_block

    @property
    def n_free(self):
        return self.n_interior + int((~self.boundary_mask).sum()) * (self.k + 1)

    @property
    def n_edge_free(self):
        return self.n_free - self.n_interior


def build_dof_map(mesh, k):
    if k < 1:
        raise ValueError("polynomial degree must be >= 1")
    n = k + 1
    n0 = n * n
    nel = mesh.n_elements
    elem_off = np.arange(nel) * n0
    free_edges = np.flatnonzero(~mesh.boundary)
    edge_off = np.full(mesh.n_edges, -1, dtype=np.int64)
    edge_off[free_edges] = nel * n0 + np.arange(free_edges.size) * n

    dofs = np.empty((nel, n0 + 4 * n), dtype=np.int64)
    dofs[:, :n0] = elem_off[:, None] + np.arange(n0)
    eo = edge_off[mesh.element_edges]  # (nel, 4)
    blocks = np.where(eo[:, :, None] >= 0, eo[:, :, None] + np.arange(n), -1)
    dofs[:, n0:] = blocks.reshape(nel, 4 * n)
    for a in (elem_off, edge_off, dofs):
        a.setflags(write=False)
    mask = mesh.boundary.copy()
    mask.setflags(write=False)
    return DofMap(
        k=k, n_elements=nel, n_edges=mesh.n_edges, element_offsets=elem_off,
        edge_offsets=edge_off, boundary_mask=mask, element_dofs=dofs,
    )


@dataclass
class WeakFunction:
    """Weak function ``{v0, vb}`` stored per element and per edge.

    ``interior`` has shape ``(n_elements, (k+1)^2)`` and ``edge`` has shape
    ``(n_edges, k+1)`` including boundary edges.
    """

    k: int
    interior: np.ndarray
    edge: np.ndarray

    @classmethod
    def zeros(cls, mesh, k):
        return cls(k, np.zeros((mesh.n_elements, (k + 1) ** 2)), np.zeros((mesh.n_edges, k + 1)))

    @classmethod
    def from_free(cls, vec, dof_map):
        n = dof_map.k + 1
        interior = vec[: dof_map.n_interior].reshape(dof_map.n_elements, n * n).copy()
        edge = np.zeros((dof_map.n_edges, n))
        free = ~dof_map.boundary_mask
        edge[free] = vec[dof_map.n_interior :].reshape(-1, n)
        return cls(dof_map.k, interior, edge)

    def to_free(self, dof_map):
        free = ~dof_map.boundary_mask
        return np.concatenate([self.interior.ravel(), self.edge[free].ravel()])

    def local(self, mesh):
        """Local coefficient blocks ``(n_elements, nloc)``."""
        eb = self.edge[mesh.element_edges]  # (nel, 4, n)
        return np.concatenate([self.interior, eb.reshape(mesh.n_elements, -1)], axis=1)

    def __sub__(self, other):
        return WeakFunction(self.k, self.interior - other.interior, self.edge - other.edge)

    def __mul__(self, t):
        return WeakFunction(self.k, self.interior * t, self.edge * t)

    __rmul__ = __mul__


def element_quad_points(mesh, tables):
    """Physical quadrature points ``(X, Y)`` of shape ``(n_elements, nq^2)``."""
    X = mesh.x0[:, None] + 0.5 * (tables.qxi[None, :] + 1.0) * mesh.hx[:, None]
    Y = mesh.y0[:, None] + 0.5 * (tables.qeta[None, :] + 1.0) * mesh.hy[:, None]
    return X, Y


def element_edge_points(mesh, tables):
    """Physical edge quadrature points ``(X, Y)`` of shape ``(n_elements, 4, nq)``."""
    X = mesh.x0[:, None, None] + 0.5 * (tables.edge_xi[None] + 1.0) * mesh.hx[:, None, None]
    Y = mesh.y0[:, None, None] + 0.5 * (tables.edge_eta[None] + 1.0) * mesh.hy[:, None, None]
    return X, Y


def element_edge_lengths(mesh):
    """Edge lengths per element slot, shape ``(n_elements, 4)``."""
    return np.stack([mesh.hx, mesh.hy, mesh.hx, mesh.hy], axis=1)


def edge_quad_points(mesh, rule):
    """Physical quadrature points on every global edge, ``(n_edges, nq)`` each."""
    a, b = mesh.endpoints[:, 0, :], mesh.endpoints[:, 1, :]
    t = 0.5 * (rule.points + 1.0)
    X = a[:, 0:1] + t[None, :] * (b[:, 0:1] - a[:, 0:1])
    Y = a[:, 1:2] + t[None, :] * (b[:, 1:2] - a[:, 1:2])
    return X, Y


def is_parallel_x(mesh):
    return mesh.orientation == PARALLEL_X
