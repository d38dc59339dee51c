"""Self-checks of the discretization, shared by the CLI and the acceptance tests."""

from dataclasses import dataclass, field

import numpy as np

from .analysis import (
    coercivity_ratios, energy_norm, error_equation_residual, project, projection_decay_study,
    weak_gradient,
)
from .assembly import assemble, solve, solve_system
from .fespace import WeakFunction
from .mesh import audit_mesh, bakhvalov_tensor_mesh
from .problems import EXAMPLES, example_5_1, measured_gamma, patch_problem
from .wgops import DEFAULT_PENALTY


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    limit: float
    detail: dict = field(default_factory=dict)

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (limit {self.limit:.1e})"


def patch_test(Ns=(4, 8), k=2, eps=1e-3, tol=1e-9, penalty=DEFAULT_PENALTY):
    """Energy error of the scheme for a solution lying in the discrete space.

    At the smallest N the sparse solution is also compared with a dense solve.
    """
    problem = patch_problem(eps, k=k, sigma=k + 1)
    worst = 0.0
    detail = {}
    for i, N in enumerate(Ns):
        mesh = bakhvalov_tensor_mesh(N, eps, problem.sigma, problem.beta1, problem.beta2)
        system = assemble(mesh, problem, penalty=penalty)
        x, _ = solve_system(system)
        e = project(problem.exact_u, mesh, k).weak - WeakFunction.from_free(x, system.dof_map)
        err = energy_norm(e, mesh, problem, penalty=penalty)
        detail[f"N={N}"] = err
        worst = max(worst, err)
        if i == 0:
            xd = np.linalg.solve(system.matrix.toarray(), system.rhs)
            detail["dense vs sparse"] = float(np.max(np.abs(xd - x)))
            worst = max(worst, detail["dense vs sparse"])
    return CheckResult("patch test", worst <= tol, worst, tol, detail)


def _random_smooth_field(rng):
    a, b, c, d = rng.uniform(-2.0, 2.0, 4)

    def u(x, y):
        return np.sin(a * x + b * y + c) * np.exp(d * x * y)

    def grad_u(x, y):
        s, co, ex = np.sin(a * x + b * y + c), np.cos(a * x + b * y + c), np.exp(d * x * y)
        return (a * co + d * y * s) * ex, (b * co + d * x * s) * ex

    return u, grad_u


def commutativity_check(n_fields=10, N=8, ks=(1, 2), eps_list=(1e-3, 1e-8), nq=14, seed=7,
                        tol=1e-11):
    """Largest gap between ``grad_w(Q_N u)`` and the projection of ``grad u``.

    The weak gradient on an element of width h is a difference quotient of
    O(|u|) data, so rounding alone contributes about ``1e-16 |u| / h``. The
    gap on each element is therefore measured relative to
    ``max(|Q grad u|, |Q_N u| / min(h_x, h_y))`` over that element.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in ks:
        for eps in eps_list:
            mesh = bakhvalov_tensor_mesh(N, eps, k + 1, 1.0, 1.0)
            hmin = np.minimum(mesh.hx, mesh.hy)
            for _ in range(n_fields):
                u, grad_u = _random_smooth_field(rng)
                proj = project(u, mesh, k, grad_u, nq)
                gw = weak_gradient(proj.weak, mesh, nq)
                gap = np.abs(gw - proj.grad).max(axis=(1, 2))
                scale = np.maximum(np.abs(proj.grad).max(axis=(1, 2)),
                                   np.abs(proj.weak.local(mesh)).max(axis=1) / hmin)
                worst = max(worst, float((gap / scale).max()))
    return CheckResult("commutativity", worst <= tol, worst, tol)


def coercivity_check(N=8, k=1, eps=1e-8, trials=100, margin=1e-8, penalty=DEFAULT_PENALTY):
    """``min A(v,v)/|||v|||^2 - (min(gamma, 1/2) - margin)`` over both examples."""
    worst = np.inf
    detail = {}
    for key, factory in EXAMPLES.items():
        problem = factory(eps, k=k)
        mesh = bakhvalov_tensor_mesh(N, eps, problem.sigma, problem.beta1, problem.beta2)
        system = assemble(mesh, problem, penalty=penalty)
        ratios = coercivity_ratios(problem, mesh, system, trials, penalty=penalty)
        bound = min(measured_gamma(problem), 0.5) - margin
        detail[f"example {key} min ratio"] = float(ratios.min())
        detail[f"example {key} bound"] = bound
        worst = min(worst, float(ratios.min()) - bound)
    return CheckResult("coercivity margin", worst >= 0.0, worst, 0.0, detail)


def error_equation_check(example=2, N=16, k=1, eps=1e-6, nq=12, trials=20, tol=1e-7,
                         penalty=DEFAULT_PENALTY):
    """Relative residual of the error-equation identity on random test functions."""
    problem = EXAMPLES[example](eps, k=k)
    mesh = bakhvalov_tensor_mesh(N, eps, problem.sigma, problem.beta1, problem.beta2)
    system = assemble(mesh, problem, nq=nq, penalty=penalty)
    x, _ = solve(system)
    rep = error_equation_residual(problem, mesh, system, x, trials, nq=nq, penalty=penalty)
    detail = {"max residual": rep.max_residual, "scale": rep.scale,
              "relative, l1 - l2 - l3 signs": rep.max_residual_flipped / rep.scale}
    return CheckResult(f"error equation (example {example})", rep.relative <= tol,
                       rep.relative, tol, detail)


DECAY_TARGETS = {
    "interior": 2.0, "edge_trace": 1.5, "weighted_grad_trace": 1.0, "weighted_trace": 1.0,
}


def projection_decay_check(eps=1e-8, k=1, Ns=(8, 16, 32, 64), tol=0.25):
    """Fitted decay exponents of the four projection estimates versus their targets."""
    problem = example_5_1(eps, k=k)
    _, exps = projection_decay_study(problem, Ns, k)
    gap = max(abs(exps[key] - target) for key, target in DECAY_TARGETS.items())
    return CheckResult("projection decay exponents", gap <= tol, gap, tol, exps)


ACCEPTANCE_MESHES = (
    # (example, k, eps list, N list)
    (1, 1, (1e-6, 1e-8), (8, 16, 32, 64)),
    (1, 2, (1e-6,), (8, 16, 32)),
    (2, 1, (1e-6, 1e-7, 1e-8, 1e-9, 1e-10), (16, 32)),
    (2, 2, (1e-10,), (16,)),
)


def mesh_audit_check(configs=ACCEPTANCE_MESHES):
    """Run the explicit-constant mesh audits in both directions of every mesh."""
    failures = []
    count = 0
    for example, k, eps_list, Ns in configs:
        factory = EXAMPLES[example]
        for eps in eps_list:
            p = factory(eps, k=k, sigma=2 * k)
            for N in Ns:
                mesh = bakhvalov_tensor_mesh(N, eps, p.sigma, p.beta1, p.beta2)
                for m in (mesh.mesh_x, mesh.mesh_y):
                    count += 1
                    audit = audit_mesh(m)
                    if not audit.passed:
                        failures.append((example, k, eps, N, m.beta))
    return CheckResult("mesh audits (failing meshes)", not failures, float(len(failures)), 0.0,
                       {"meshes": count, "failures": failures})


def run_all(penalty=DEFAULT_PENALTY):
    """Every suite with its default configuration, in a fixed order."""
    return [
        patch_test(penalty=penalty),
        commutativity_check(),
        coercivity_check(penalty=penalty),
        error_equation_check(2, penalty=penalty),
        error_equation_check(1, penalty=penalty),
        projection_decay_check(),
        mesh_audit_check(),
    ]

