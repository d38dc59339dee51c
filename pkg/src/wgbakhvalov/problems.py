"""Benchmark problems for -eps*Lap(u) - b.grad(u) + c*u = f on the unit square."""

from dataclasses import dataclass, replace
from typing import Callable, Optional

import mpmath
import numpy as np


class AssumptionError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemSpec:
    """Coefficients, data and structural constants of one problem instance.

    ``b(x, y)`` returns the pair ``(b1, b2)``; ``div_b`` is its closed-form
    divergence. ``exact_u_hp`` optionally evaluates the exact solution with
    mpmath numbers and is only used by oracles.
    """

    name: str
    eps: float
    b: Callable
    div_b: Callable
    c: Callable
    f: Callable
    beta1: float
    beta2: float
    gamma: float
    k: int = 1
    sigma: Optional[float] = None
    exact_u: Optional[Callable] = None
    exact_grad_u: Optional[Callable] = None
    exact_u_hp: Optional[Callable] = None

    def __post_init__(self):
        if self.sigma is None:
            object.__setattr__(self, "sigma", float(self.k + 1))

    def with_(self, **changes):
        return replace(self, **changes)


def _const(v):
    return lambda x, y: np.full(np.broadcast(x, y).shape, float(v))


def _layer_factor(z, rate, eps, s, ds, d2s, m=np):
    """``F(z) = s(z) (1 - exp(-rate z/eps))`` with first and second derivative.

    The scaled exponentials ``(rate/eps)^p exp(-rate z/eps)`` are formed in
    log space; they underflow to zero far from the layer.
    """
    if m is np:
        with np.errstate(under="ignore"):
            E = np.exp(-rate * z / eps)
            lr = np.log(rate / eps)
            E1 = np.exp(lr - rate * z / eps)
            E2 = np.exp(2 * lr - rate * z / eps)
    else:
        E = m.exp(-rate * z / eps)
        E1 = (rate / eps) * E
        E2 = (rate / eps) ** 2 * E
    F = s * (1 - E)
    dF = ds * (1 - E) + s * E1
    d2F = d2s * (1 - E) + 2 * ds * E1 - s * E2
    return F, dF, d2F


def _separable_problem(name, eps, k, sigma, b, div_b, c, beta1, beta2, gamma, xfac, yfac):
    """Problem with exact solution ``u = 2 X(x) Y(y)`` for layer factors X, Y."""

    def parts(x, y, m=np):
        X = xfac(x, eps, m)
        Y = yfac(y, eps, m)
        return X, Y

    def u(x, y):
        (X, _, _), (Y, _, _) = parts(x, y)
        return 2 * X * Y

    def grad_u(x, y):
        (X, dX, _), (Y, dY, _) = parts(x, y)
        return 2 * dX * Y, 2 * X * dY

    def f(x, y):
        (X, dX, d2X), (Y, dY, d2Y) = parts(x, y)
        b1, b2 = b(x, y)
        lap = 2 * (d2X * Y + X * d2Y)
        return -eps * lap - b1 * 2 * dX * Y - b2 * 2 * X * dY + c(x, y) * 2 * X * Y

    def u_hp(x, y):
        X = xfac(x, eps, mpmath)[0]
        Y = yfac(y, eps, mpmath)[0]
        return 2 * X * Y

    return ProblemSpec(
        name=name, eps=eps, b=b, div_b=div_b, c=c, f=f, beta1=beta1, beta2=beta2,
        gamma=gamma, k=k, sigma=sigma, exact_u=u, exact_grad_u=grad_u, exact_u_hp=u_hp,
    )


def _check_eps(eps):
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps!r}")


def _y_factor(rate):
    def fac(y, eps, m):
        return _layer_factor(y, rate, eps, (1 - y) ** 2, -2 * (1 - y), 2.0 + 0 * y, m)
    return fac


def example_5_1(eps, k=1, sigma=None):
    """Variable convection b = (2+2x-y, 3-x+2y), c = 1.

    Exact solution ``2 sin(pi x)(1-e^{-2x/eps})(1-y)^2(1-e^{-y/eps})``.
    """
    _check_eps(eps)

    def xfac(x, eps, m):
        pi = m.pi
        return _layer_factor(x, 2.0, eps, m.sin(pi * x), pi * m.cos(pi * x),
                             -pi * pi * m.sin(pi * x), m)

    def b(x, y):
        return 2 + 2 * x - y, 3 - x + 2 * y

    return _separable_problem(
        "example_5_1", eps, k, sigma, b, _const(4.0), _const(1.0),
        beta1=1.0, beta2=2.0, gamma=3.0, xfac=xfac, yfac=_y_factor(1.0),
    )


def example_5_2(eps, k=1, sigma=None):
    """Constant convection b = (2, 3), c = 1.

    Exact solution ``2 sin(1-x)(1-e^{-2x/eps})(1-y)^2(1-e^{-3y/eps})``.
    """
    _check_eps(eps)

    def xfac(x, eps, m):
        return _layer_factor(x, 2.0, eps, m.sin(1 - x), -m.cos(1 - x), -m.sin(1 - x), m)

    def b(x, y):
        return _const(2.0)(x, y), _const(3.0)(x, y)

    return _separable_problem(
        "example_5_2", eps, k, sigma, b, _const(0.0), _const(1.0),
        beta1=2.0, beta2=3.0, gamma=1.0, xfac=xfac, yfac=_y_factor(3.0),
    )


def patch_problem(eps=1e-3, k=2, sigma=None):
    """b = (2, 3), c = 1, u = x(1-x)y(1-y); u lies in Q_2 and vanishes on the boundary."""

    def u(x, y):
        return x * (1 - x) * y * (1 - y)

    def grad_u(x, y):
        return (1 - 2 * x) * y * (1 - y), x * (1 - x) * (1 - 2 * y)

    def f(x, y):
        lap = -2 * y * (1 - y) - 2 * x * (1 - x)
        ux, uy = grad_u(x, y)
        return -eps * lap - 2 * ux - 3 * uy + u(x, y)

    def b(x, y):
        return _const(2.0)(x, y), _const(3.0)(x, y)

    return ProblemSpec(
        name="patch", eps=eps, b=b, div_b=_const(0.0), c=_const(1.0), f=f,
        beta1=2.0, beta2=3.0, gamma=1.0, k=k, sigma=sigma,
        exact_u=u, exact_grad_u=grad_u, exact_u_hp=u,
    )


EXAMPLES = {1: example_5_1, 2: example_5_2}


def validation_grid(n=41):
    s = np.linspace(0.0, 1.0, n)
    return np.meshgrid(s, s, indexing="xy")


def measured_gamma(problem, n=41):
    """Minimum of c + div(b)/2 over an ``n x n`` grid."""
    X, Y = validation_grid(n)
    return float(np.min(problem.c(X, Y) + 0.5 * problem.div_b(X, Y)))


def validate_assumptions(problem, n=41, rtol=1e-12):
    """Check b1 >= beta1 > 0, b2 >= beta2 > 0 and c + div(b)/2 >= gamma > 0 on a grid.

    Returns the measured minima; raises :class:`AssumptionError` on failure.
    """
    X, Y = validation_grid(n)
    b1, b2 = problem.b(X, Y)
    mins = {
        "b1": float(np.min(b1)),
        "b2": float(np.min(b2)),
        "c+div(b)/2": measured_gamma(problem, n),
    }
    consts = {"b1": problem.beta1, "b2": problem.beta2, "c+div(b)/2": problem.gamma}
    for key, lower in consts.items():
        if not lower > 0:
            raise AssumptionError(f"{key}: bound {lower!r} must be positive")
        if mins[key] <= 0 or mins[key] < lower * (1 - rtol):
            raise AssumptionError(f"{key}: minimum {mins[key]!r} below bound {lower!r}")
    return mins


def _richardson(stencil, h, levels):
    table = []
    hh = mpmath.mpf(h)
    for _ in range(levels):
        table.append(stencil(hh))
        hh /= 2
    for j in range(1, levels):
        fac = mpmath.mpf(4) ** j
        table = [(fac * table[i + 1] - table[i]) / (fac - 1) for i in range(len(table) - 1)]
    return table[0]


def fd_derivatives_hp(u_hp, x, y, h, levels=5, dps=50):
    """``(u_x, u_y, Lap u)`` by central differences with Richardson extrapolation in h^2.

    Evaluated in ``dps``-digit mpmath arithmetic so that round-off does not
    limit small steps.
    """
    with mpmath.workdps(dps):
        x, y = mpmath.mpf(x), mpmath.mpf(y)
        u0 = u_hp(x, y)
        ux = _richardson(lambda s: (u_hp(x + s, y) - u_hp(x - s, y)) / (2 * s), h, levels)
        uy = _richardson(lambda s: (u_hp(x, y + s) - u_hp(x, y - s)) / (2 * s), h, levels)
        lap = _richardson(
            lambda s: (u_hp(x + s, y) + u_hp(x - s, y) + u_hp(x, y + s) + u_hp(x, y - s)
                       - 4 * u0) / s**2,
            h, levels,
        )
        return float(ux), float(uy), float(lap)


def check_manufactured_f(problem, n_points=100, seed=0, rtol=1e-8, layer=10.0):
    """Compare ``f`` with ``-eps*Lap(u) - b.grad(u) + c*u`` at random points.

    Derivatives come from :func:`fd_derivatives_hp`; points within
    ``layer*eps`` of the boundary are skipped. Returns the worst relative
    discrepancy ``|f - f_fd| / max(1, |f|)``.
    """
    rng = np.random.default_rng(seed)
    eps = problem.eps
    lo = layer * eps
    pts = rng.uniform(lo, 1 - lo, size=(n_points, 2))
    worst = 0.0
    h = min(1e-2, eps / 4)
    for x, y in pts:
        gx, gy, lap = fd_derivatives_hp(problem.exact_u_hp, x, y, h)
        b1, b2 = problem.b(np.float64(x), np.float64(y))
        u = problem.exact_u(np.float64(x), np.float64(y))
        c = problem.c(np.float64(x), np.float64(y))
        f_fd = -eps * lap - b1 * gx - b2 * gy + c * u
        f = problem.f(np.float64(x), np.float64(y))
        worst = max(worst, float(abs(f - f_fd) / max(1.0, abs(f))))
    if worst > rtol:
        raise AssumptionError(f"manufactured f mismatch {worst:.3e} > {rtol:.1e}")
    return worst
