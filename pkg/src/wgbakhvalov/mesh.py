"""Bakhvalov-type layer-adapted tensor-product meshes on the unit square."""

from dataclasses import dataclass, field

import numpy as np

# region codes for elements of the tensor mesh
OMEGA_0 = 0
OMEGA_1 = 1
OMEGA_2 = 2
OMEGA_12 = 3
REGION_NAMES = {OMEGA_0: "Omega_0", OMEGA_1: "Omega_1", OMEGA_2: "Omega_2", OMEGA_12: "Omega_12"}

# edge orientation codes
PARALLEL_X = 0
PARALLEL_Y = 1


class MeshError(ValueError):
    pass


@dataclass(frozen=True)
class Mesh1D:
    """Graded 1D partition of [0, 1] with fine cells near x = 0."""

    nodes: np.ndarray
    N: int
    eps: float
    sigma: float
    beta: float

    @property
    def widths(self):
        """Cell widths h_1..h_N (``widths[i-1] == h_i``)."""
        return np.diff(self.nodes)

    def h(self, i):
        """Width of cell ``i`` in 1-based numbering."""
        return self.nodes[i] - self.nodes[i - 1]

    @property
    def transition(self):
        return self.nodes[self.N // 2]

    def dump(self, path):
        """Write one node per line in ``%.17g`` format."""
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for x in self.nodes:
                fh.write("%.17g\n" % x)


def bakhvalov_nodes(N, eps, sigma, beta):
    """Nodes of the Bakhvalov-type mesh.

    Cells 1..N/2 follow ``-(sigma*eps/beta) * ln(1 - 2(1-eps)i/N)``; the
    remaining N/2 cells split [x_{N/2}, 1] uniformly.
    """
    if int(N) != N or N < 4 or N % 2:
        raise MeshError(f"N must be an even integer >= 4, got {N!r}")
    N = int(N)
    if not eps > 0:
        raise MeshError(f"eps must be positive, got {eps!r}")
    if eps > 1.0 / N:
        raise MeshError(f"eps={eps!r} violates eps <= 1/N = {1.0 / N!r}")
    if not sigma > 0:
        raise MeshError(f"sigma must be positive, got {sigma!r}")
    if not beta > 0:
        raise MeshError(f"beta must be positive, got {beta!r}")

    half = N // 2
    i = np.arange(N + 1, dtype=float)
    nodes = np.empty(N + 1)
    nodes[: half + 1] = -(sigma * eps / beta) * np.log(1.0 - 2.0 * (1.0 - eps) * i[: half + 1] / N)
    xt = nodes[half]
    nodes[half + 1 :] = 1.0 - (1.0 - xt) * 2.0 * (N - i[half + 1 :]) / N
    nodes[0] = 0.0
    if not np.all(np.diff(nodes) > 0):
        raise MeshError("generated nodes are not strictly increasing")
    nodes.setflags(write=False)
    return Mesh1D(nodes=nodes, N=N, eps=float(eps), sigma=float(sigma), beta=float(beta))


@dataclass(frozen=True)
class TensorMesh:
    """Rectangular elements of ``mesh_x x mesh_y``.

    Elements are numbered row-major with x fastest: ``e = iy*N + ix``.
    Edges parallel to x come first (``j*N + i`` for the edge at y_j over
    cell i), then edges parallel to y (``N(N+1) + j*(N+1) + i`` for the
    edge at x_i over cell j).
    """

    mesh_x: Mesh1D
    mesh_y: Mesh1D
    N: int
    # per element
    ix: np.ndarray
    iy: np.ndarray
    x0: np.ndarray
    x1: np.ndarray
    y0: np.ndarray
    y1: np.ndarray
    region: np.ndarray
    # (n_elements, 4) edge ids in slot order bottom, right, top, left
    element_edges: np.ndarray
    # per edge
    orientation: np.ndarray
    endpoints: np.ndarray  # (n_edges, 2, 2): [[xa, ya], [xb, yb]]
    neighbors: np.ndarray  # (n_edges, 2): below/left, above/right; -1 outside
    boundary: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n_elements(self):
        return self.ix.size

    @property
    def n_edges(self):
        return self.orientation.size

    @property
    def hx(self):
        return self.x1 - self.x0

    @property
    def hy(self):
        return self.y1 - self.y0

    @property
    def edge_length(self):
        d = self.endpoints[:, 1, :] - self.endpoints[:, 0, :]
        return np.where(self.orientation == PARALLEL_X, d[:, 0], d[:, 1])

    @property
    def interior_edges(self):
        return np.flatnonzero(~self.boundary)

    def element(self, ix, iy):
        return iy * self.N + ix


def build_tensor_mesh(mesh_x, mesh_y):
    if mesh_x.N != mesh_y.N:
        raise MeshError(f"mismatched N: {mesh_x.N} vs {mesh_y.N}")
    N = mesh_x.N
    half = N // 2
    xs, ys = mesh_x.nodes, mesh_y.nodes

    iy, ix = np.divmod(np.arange(N * N), N)
    region = np.full(N * N, OMEGA_0, dtype=np.int8)
    fine_x = ix <= half - 1
    fine_y = iy <= half - 1
    region[fine_x & fine_y] = OMEGA_12
    region[~fine_x & fine_y] = OMEGA_1
    region[fine_x & ~fine_y] = OMEGA_2

    nh = N * (N + 1)
    bottom = iy * N + ix
    top = (iy + 1) * N + ix
    left = nh + iy * (N + 1) + ix
    right = left + 1
    element_edges = np.stack([bottom, right, top, left], axis=1)

    # edges parallel to x: at y_j spanning [x_i, x_{i+1}]
    jh, ih = np.divmod(np.arange(nh), N)
    h_end = np.stack(
        [np.stack([xs[ih], ys[jh]], axis=1), np.stack([xs[ih + 1], ys[jh]], axis=1)], axis=1
    )
    h_nb = np.stack(
        [np.where(jh > 0, (jh - 1) * N + ih, -1), np.where(jh < N, jh * N + ih, -1)], axis=1
    )
    # edges parallel to y: at x_i spanning [y_j, y_{j+1}]
    jv, iv = np.divmod(np.arange(N * (N + 1)), N + 1)
    v_end = np.stack(
        [np.stack([xs[iv], ys[jv]], axis=1), np.stack([xs[iv], ys[jv + 1]], axis=1)], axis=1
    )
    v_nb = np.stack(
        [np.where(iv > 0, jv * N + iv - 1, -1), np.where(iv < N, jv * N + iv, -1)], axis=1
    )
    neighbors = np.concatenate([h_nb, v_nb])
    orientation = np.concatenate(
        [np.full(nh, PARALLEL_X, dtype=np.int8), np.full(nh, PARALLEL_Y, dtype=np.int8)]
    )

    arrays = dict(
        ix=ix, iy=iy, x0=xs[ix], x1=xs[ix + 1], y0=ys[iy], y1=ys[iy + 1], region=region,
        element_edges=element_edges, orientation=orientation,
        endpoints=np.concatenate([h_end, v_end]), neighbors=neighbors,
        boundary=(neighbors < 0).any(axis=1),
    )
    for a in arrays.values():
        a.setflags(write=False)
    return TensorMesh(mesh_x=mesh_x, mesh_y=mesh_y, N=N, **arrays)


def bakhvalov_tensor_mesh(N, eps, sigma, beta1, beta2):
    """Tensor mesh graded with ``beta1`` in x and ``beta2`` in y."""
    return build_tensor_mesh(
        bakhvalov_nodes(N, eps, sigma, beta1), bakhvalov_nodes(N, eps, sigma, beta2)
    )


@dataclass
class MeshAudit:
    checks: dict  # name -> bool
    ratios: dict  # name -> float, inequalities with unspecified constants
    values: dict

    @property
    def passed(self):
        return all(self.checks.values())

    def lines(self):
        out = []
        for name, ok in self.checks.items():
            out.append(f"{name:<36} {'PASS' if ok else 'FAIL'}")
        for name, r in self.ratios.items():
            out.append(f"{name:<36} ratio={r:.6g}")
        return out


def audit_mesh(mesh, rtol=1e-12):
    """Check the explicit-constant width inequalities of a Bakhvalov mesh.

    Checks monotone fine widths, sigma*eps/4 <= h_{N/2-1} <= sigma*eps,
    sigma*eps/2 <= h_{N/2} <= 2*sigma/N and 1/N <= h_i <= 2/N on the
    coarse part. Bounds with unnamed constants are reported as ratios.
    """
    N, eps, sigma = mesh.N, mesh.eps, mesh.sigma
    half = N // 2
    h = mesh.widths  # h[i-1] = h_i
    fine = h[: half - 1]
    slack = 1.0 + rtol

    def le(a, b):
        return a <= b * slack

    h_pre = h[half - 2]
    h_tr = h[half - 1]
    coarse = h[half:]
    checks = {
        "positive widths": bool(np.all(h > 0)),
        "h_1 <= ... <= h_{N/2-1}": bool(np.all(np.diff(fine) >= -rtol * fine[1:])),
        "s*eps/4 <= h_{N/2-1} <= s*eps": le(sigma * eps / 4, h_pre) and le(h_pre, sigma * eps),
        "s*eps/2 <= h_{N/2} <= 2s/N": le(sigma * eps / 2, h_tr) and le(h_tr, 2 * sigma / N),
        "1/N <= h_i <= 2/N, i > N/2": bool(
            np.all(coarse * slack >= 1.0 / N) and np.all(coarse <= 2.0 / N * slack)
        ),
    }
    ratios = {
        "h_1 / (eps/N)": h[0] / (eps / N),
        "h_{N/2-1} / (s*eps/beta)": h_pre / (sigma * eps / mesh.beta),
        "x_{N/2} / (s*eps*ln N)": mesh.transition / (sigma * eps * np.log(N)),
        "x_{N/2} / (s*ln N)": mesh.transition / (sigma * np.log(N)),
        "x_{N/2} / (s*eps*|ln eps|)": mesh.transition / (sigma * eps * abs(np.log(eps))),
    }
    # h_i^rho exp(-beta x_{i-1}/eps) / (eps/N)^rho, worst case over rho in [0, sigma]
    xl = mesh.nodes[: half - 1]
    rho = np.linspace(0.0, sigma, 9)
    with np.errstate(under="ignore"):
        vals = (fine[None, :] / (eps / N)) ** rho[:, None] * np.exp(-mesh.beta * xl / eps)[None, :]
    ratios["max h_i^p e^{-beta x/eps} / (eps/N)^p"] = float(vals.max())
    values = {"h_{N/2-1}": h_pre, "h_{N/2}": h_tr, "x_{N/2}": mesh.transition}
    return MeshAudit(checks=checks, ratios=ratios, values=values)
