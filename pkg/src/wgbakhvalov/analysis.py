"""Projections, the energy norm, the error-equation diagnostic and rate utilities."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .fespace import (
    EDGE_NORMALS, WeakFunction, default_quad_order, edge_quad_points,
    element_edge_lengths, element_edge_points, element_quad_points, reference_tables,
)
from .wgops import (
    trace_estimate_weights, diffusion_matrices, local_jump_abs_bn, local_stabilizer_c,
    local_stabilizer_d, local_weak_gradient, penalty_weights, DEFAULT_PENALTY,
)


@dataclass
class ProjectedSolution:
    weak: WeakFunction
    grad: Optional[np.ndarray] = None  # (n_elements, 2, (k+1)^2)


def _tables(k, nq):
    return reference_tables(k, default_quad_order(k) if nq is None else nq)


def project_interior(g, mesh, k, nq=None):
    """Elementwise L2 projection of ``g`` onto Q_k, ``(n_elements, (k+1)^2)``."""
    t = _tables(k, nq)
    X, Y = element_quad_points(mesh, t)
    gv = np.broadcast_to(g(X, Y), X.shape)
    return (gv * t.w2) @ t.phi / t.mass


def project_edges(g, mesh, k, nq=None):
    """Edgewise L2 projection of ``g`` onto P_k, ``(n_edges, k+1)``."""
    t = _tables(k, nq)
    X, Y = edge_quad_points(mesh, t.rule)
    gv = np.broadcast_to(g(X, Y), X.shape)
    return (gv * t.w) @ t.L.T / t.edge_norms


def project(u, mesh, k, grad_u=None, nq=None):
    """``Q_N u = {Q_0 u, Q_b u}`` and optionally the vector projection of grad u."""
    weak = WeakFunction(k, project_interior(u, mesh, k, nq), project_edges(u, mesh, k, nq))
    grad = None
    if grad_u is not None:
        gx = project_interior(lambda x, y: grad_u(x, y)[0], mesh, k, nq)
        gy = project_interior(lambda x, y: grad_u(x, y)[1], mesh, k, nq)
        grad = np.stack([gx, gy], axis=1)
    return ProjectedSolution(weak, grad)


def weak_gradient(v, mesh, nq=None):
    """Coefficients of the weak gradient of ``v``, ``(n_elements, 2, (k+1)^2)``."""
    Gx, Gy = local_weak_gradient(mesh, v.k, nq)
    loc = v.local(mesh)
    return np.stack([np.einsum("lab,lb->la", Gx, loc), np.einsum("lab,lb->la", Gy, loc)], axis=1)


def _quad_form(mats, loc, other=None):
    other = loc if other is None else other
    return float(np.einsum("la,lab,lb->", other, mats, loc))


def energy_norm_parts(v, mesh, problem, nq=None, penalty=DEFAULT_PENALTY):
    """Squared contributions of the energy norm, keyed by term."""
    k = v.k
    loc = v.local(mesh)
    theta = penalty_weights(mesh, problem.eps, penalty)
    t = _tables(k, nq)
    mass = 0.25 * (mesh.hx * mesh.hy)[:, None] * t.mass[None, :]
    return {
        "diffusion": _quad_form(diffusion_matrices(mesh, k, problem.eps, nq), loc),
        "s_d": _quad_form(local_stabilizer_d(mesh, k, theta, nq), loc),
        "l2": float(np.sum(mass * v.interior**2)),
        "jump_bn": _quad_form(local_jump_abs_bn(mesh, k, problem.b, nq), loc),
    }


def energy_norm(v, mesh, problem, nq=None, penalty=DEFAULT_PENALTY):
    """``sqrt(eps|grad_w v|^2 + s_d(v,v) + |v0|^2 + ||b.n|^{1/2}(v0 - vb)|^2)``.

    Coefficients are scaled by their largest magnitude before squaring, so
    the result neither underflows nor overflows for extreme ``v``.
    """
    scale = max(float(np.abs(v.interior).max(initial=0.0)), float(np.abs(v.edge).max(initial=0.0)))
    if scale == 0.0:
        return 0.0
    parts = energy_norm_parts(v * (1.0 / scale), mesh, problem, nq, penalty)
    return scale * float(np.sqrt(sum(parts.values())))


def error_equation_terms(u, grad_u, v, mesh, problem, proj=None, nq=None,
                         penalty=DEFAULT_PENALTY):
    """Consistency functionals l1, l2, l3 and the stabilizer terms for test ``v``.

    ``l1 = (u - Q0 u, div(b v0))``, ``l2 = <u - Qb u, b.n (v0 - vb)>``,
    ``l3 = eps <(grad u - Q grad u).n, v0 - vb>``, plus ``s_d(Q_N u, v)`` and
    ``s_c(Q_N u, v)``.
    """
    k = v.k
    t = _tables(k, nq)
    if proj is None:
        proj = project(u, mesh, k, grad_u, nq)
    Qu = proj.weak
    vloc = v.local(mesh)
    qloc = Qu.local(mesh)
    hx, hy = mesh.hx[:, None], mesh.hy[:, None]

    X, Y = element_quad_points(mesh, t)
    r = np.broadcast_to(u(X, Y), X.shape) - Qu.interior @ t.phi.T
    b1, b2 = (np.broadcast_to(c, X.shape) for c in problem.b(X, Y))
    db = np.broadcast_to(problem.div_b(X, Y), X.shape)
    v0 = v.interior @ t.phi.T
    v0x = (2.0 / hx) * (v.interior @ t.dphi_dxi.T)
    v0y = (2.0 / hy) * (v.interior @ t.dphi_deta.T)
    dbv = db * v0 + b1 * v0x + b2 * v0y
    l1 = float(np.sum(0.25 * hx * hy * t.w2 * r * dbv))

    EX, EY = element_edge_points(mesh, t)  # (nel, 4, nq)
    he = element_edge_lengths(mesh)[:, :, None]
    ds = 0.5 * he * t.w[None, None, :]
    jump = np.einsum("epa,la->lep", t.jump, vloc)
    ub = Qu.edge[mesh.element_edges] @ t.L  # (nel, 4, nq)
    eb1, eb2 = (np.broadcast_to(c, EX.shape) for c in problem.b(EX, EY))
    nx, ny = EDGE_NORMALS[:, 0][None, :, None], EDGE_NORMALS[:, 1][None, :, None]
    bn = eb1 * nx + eb2 * ny
    l2 = float(np.sum(ds * (np.broadcast_to(u(EX, EY), EX.shape) - ub) * bn * jump))

    gx, gy = (np.broadcast_to(c, EX.shape) for c in grad_u(EX, EY))
    tr = t.trace  # (4, nq, n0)
    Qgx = np.einsum("epa,la->lep", tr, proj.grad[:, 0])
    Qgy = np.einsum("epa,la->lep", tr, proj.grad[:, 1])
    flux = (gx - Qgx) * nx + (gy - Qgy) * ny
    l3 = float(problem.eps * np.sum(ds * flux * jump))

    theta = penalty_weights(mesh, problem.eps, penalty)
    sd = _quad_form(local_stabilizer_d(mesh, k, theta, nq), qloc, vloc)
    sc = _quad_form(local_stabilizer_c(mesh, k, problem.b, nq), qloc, vloc)
    return {"l1": l1, "l2": l2, "l3": l3, "s_d": sd, "s_c": sc}


def error_equation_rhs(terms):
    """Right-hand side of the error equation, ``-l1 + l2 + l3 + s_d + s_c``.

    These signs follow from integrating ``(b.grad u, v0)`` and
    ``eps (grad u, grad_w v)`` by parts element by element.
    """
    return -terms["l1"] + terms["l2"] + terms["l3"] + terms["s_d"] + terms["s_c"]


@dataclass
class ErrorEquationReport:
    max_residual: float
    scale: float
    relative: float
    max_residual_flipped: float  # with l1 - l2 - l3 instead


def error_equation_residual(problem, mesh, system, x_N, trials=20, seed=1234, nq=None,
                            penalty=DEFAULT_PENALTY):
    """Max over random unit test functions of ``|A(Q_N u - u_N, v) - rhs(v)|``.

    ``scale`` is ``||A||_inf * max|coefficients of Q_N u|``; ``relative``
    is the residual divided by it.
    """
    k = system.dof_map.k
    dm = system.dof_map
    proj = project(problem.exact_u, mesh, k, problem.exact_grad_u, nq)
    xq = proj.weak.to_free(dm)
    e = xq - x_N
    Ae = system.matrix @ e
    rng = np.random.default_rng(seed)
    worst = worst_flip = 0.0
    for _ in range(trials):
        vec = rng.standard_normal(dm.n_free)
        vec /= np.linalg.norm(vec)
        v = WeakFunction.from_free(vec, dm)
        terms = error_equation_terms(problem.exact_u, problem.exact_grad_u, v, mesh, problem,
                                     proj=proj, nq=nq, penalty=penalty)
        lhs = float(vec @ Ae)
        worst = max(worst, abs(lhs - error_equation_rhs(terms)))
        flipped = terms["l1"] - terms["l2"] - terms["l3"] + terms["s_d"] + terms["s_c"]
        worst_flip = max(worst_flip, abs(lhs - flipped))
    A_inf = float(abs(system.matrix).sum(axis=1).max())
    scale = A_inf * max(float(np.abs(xq).max()), 1e-300)
    return ErrorEquationReport(worst, scale, worst / scale, worst_flip)


def convergence_rates(errors):
    """``log2(e_i / e_{i+1})`` for successive doublings; first entry is 0.0."""
    errors = list(errors)
    Ns = [int(n) for n, _ in errors]
    for a, b in zip(Ns, Ns[1:]):
        if b != 2 * a:
            raise ValueError(f"N sequence must double successively, got {Ns}")
    rates = [0.0]
    for (_, ea), (_, eb) in zip(errors, errors[1:]):
        rates.append(float(np.log2(ea / eb)))
    return rates[: len(errors)]


def fitted_exponent(Ns, values):
    """Least-squares decay exponent ``p`` in ``value ~ C N^{-p}``."""
    slope = np.polyfit(np.log(np.asarray(Ns, float)), np.log(np.asarray(values, float)), 1)[0]
    return float(-slope)


def projection_quantities(u, grad_u, mesh, k, eps, nq=None):
    """Left-hand sides of the four projection estimates on one mesh.

    Returns ``{"interior": ||u - Q0 u||, "edge_trace": sum_i ||u - Q0 u||_{dT_i},
    "weighted_grad_trace": sum_i (sum theta_T ||grad u - Q grad u||^2_{dT_i})^{1/2},
    "weighted_trace": sum_i (sum penalty_T ||u - Q0 u||^2_{dT_i})^{1/2}}``.
    Edge norms run over all element boundaries, grouped by orientation.
    """
    t = _tables(k, nq)
    proj = project(u, mesh, k, grad_u, nq)
    X, Y = element_quad_points(mesh, t)
    r = np.broadcast_to(u(X, Y), X.shape) - proj.weak.interior @ t.phi.T
    interior = float(np.sqrt(np.sum(0.25 * (mesh.hx * mesh.hy)[:, None] * t.w2 * r**2)))

    EX, EY = element_edge_points(mesh, t)
    ds = 0.5 * element_edge_lengths(mesh)[:, :, None] * t.w[None, None, :]
    tr = t.trace
    ru = np.broadcast_to(u(EX, EY), EX.shape) - np.einsum("epa,la->lep", tr, proj.weak.interior)
    gx, gy = (np.broadcast_to(c, EX.shape) for c in grad_u(EX, EY))
    rgx = gx - np.einsum("epa,la->lep", tr, proj.grad[:, 0])
    rgy = gy - np.einsum("epa,la->lep", tr, proj.grad[:, 1])
    ru2 = np.sum(ds * ru**2, axis=2)  # (nel, 4)
    rg2 = np.sum(ds * (rgx**2 + rgy**2), axis=2)
    theta = trace_estimate_weights(mesh, eps)
    pen = penalty_weights(mesh, eps, "coarse-n")
    xpar = [0, 2]  # bottom, top
    ypar = [1, 3]
    edge_trace = sum(np.sqrt(ru2[:, s].sum()) for s in (xpar, ypar))
    wgrad = sum(np.sqrt((theta[:, s] * rg2[:, s]).sum()) for s in (xpar, ypar))
    wtrace = sum(np.sqrt((pen[:, s] * ru2[:, s]).sum()) for s in (xpar, ypar))
    return {"interior": interior, "edge_trace": float(edge_trace),
            "weighted_grad_trace": float(wgrad), "weighted_trace": float(wtrace)}


def projection_decay_study(problem, Ns, k=None, nq=None, sigma=None):
    """Projection estimates over a sequence of meshes and their fitted exponents."""
    from .mesh import bakhvalov_tensor_mesh

    k = problem.k if k is None else k
    sigma = problem.sigma if sigma is None else sigma
    rows = []
    for N in Ns:
        mesh = bakhvalov_tensor_mesh(N, problem.eps, sigma, problem.beta1, problem.beta2)
        rows.append(projection_quantities(problem.exact_u, problem.exact_grad_u, mesh, k,
                                          problem.eps, nq))
    exps = {key: fitted_exponent(Ns, [r[key] for r in rows]) for key in rows[0]}
    return rows, exps


def coercivity_ratios(problem, mesh, system, trials=100, seed=4321, nq=None,
                      penalty=DEFAULT_PENALTY):
    """``A(v, v) / |||v|||^2`` for fixed-seed random ``v`` in V_N^0."""
    dm = system.dof_map
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        vec = rng.standard_normal(dm.n_free)
        v = WeakFunction.from_free(vec, dm)
        out.append(float(vec @ (system.matrix @ vec)) / energy_norm(v, mesh, problem, nq, penalty) ** 2)
    return np.array(out)
