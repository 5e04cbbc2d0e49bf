"""Scalar radial vortex profile f_eps and the reduced energy of a profile pair.

The profile solves, on (0,1),

    -f'' - (N-1)/r f' + (N-1)/r^2 f = eps^-2 f W'(1 - f^2),  f(0)=0, f(1)=1,

discretized with second-order central differences on the uniform grid. The
solver is a damped Newton iteration started from f = r (the exact eps -> inf
limit); when that stalls it falls back to continuation in eps, halving from
eps = 1e6 down to the target with warm starts.

The reduced energy of a pair (f, g) is

    I_eps = 1/2 int_0^1 [ (f')^2 + (g')^2 + (N-1)/r^2 f^2
                          + eps^-2 W(1 - f^2 - g^2) ] r^(N-1) dr,

reported as a term-by-term breakdown.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, DivergentEnergyError, DomainError
from .potential import PotentialSpec, eval_potential
from .radial import (
    ProfilePair,
    RadialGrid,
    derivative_samples,
    integrate_radial,
    integrate_radial_interior,
)

CONTINUATION_START = 1.0e6


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-10
    max_iterations: int = 100


@dataclass(frozen=True)
class EnergyBreakdown:
    """Term-by-term reduced energy; total is the sum of the four parts."""

    gradient_f: float
    gradient_g: float
    angular: float
    potential: float
    total: float


def _scalar_residual(grid: RadialGrid, spec: PotentialSpec, epsilon: float,
                     f: np.ndarray, with_scale: bool = False):
    """Central-difference residual of the scalar profile ODE on nodes 1..J-1.

    With ``with_scale`` also returns the max magnitude of the residual's
    constituent terms, the natural roundoff scale of the computation.
    """
    h = grid.spacing
    r = grid.nodes[1:-1]
    N = grid.dimension
    lap = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    first = (f[2:] - f[:-2]) / (2.0 * h)
    _, wp, _ = eval_potential(spec, 1.0 - f[1:-1] ** 2)
    t1 = -lap
    t2 = -(N - 1) / r * first
    t3 = (N - 1) / r**2 * f[1:-1]
    t4 = -f[1:-1] * wp / epsilon**2
    res = t1 + t2 + t3 + t4
    if not with_scale:
        return res
    scale = float(np.max(np.abs(t1) + np.abs(t2) + np.abs(t3) + np.abs(t4)))
    return res, scale


_EPS_MACH = float(np.finfo(float).eps)


def _scalar_newton(grid, spec, epsilon, f0, opts):
    """Damped Newton on the interior unknowns; returns (f, iterations).

    The convergence tolerance is floored by the roundoff scale of the
    residual evaluation (dominated by the eps^-2 term for small eps), below
    which a max-norm residual criterion is unsatisfiable.
    """
    h = grid.spacing
    r = grid.nodes[1:-1]
    N = grid.dimension
    f = f0.copy()
    res, scale = _scalar_residual(grid, spec, epsilon, f, with_scale=True)
    rnorm = float(np.max(np.abs(res)))
    for it in range(opts.max_iterations):
        if not np.isfinite(rnorm):
            raise ConvergenceError(
                f"NaN residual at eps={epsilon}, iteration {it}",
                iterations=it, residual=rnorm)
        if rnorm < opts.tolerance:
            return f, it
        fi = f[1:-1]
        _, wp, wpp = eval_potential(spec, 1.0 - fi**2)
        diag = (2.0 / h**2 + (N - 1) / r**2
                - (wp - 2.0 * fi**2 * wpp) / epsilon**2)
        lower = -1.0 / h**2 + (N - 1) / (2.0 * h * r)
        upper = -1.0 / h**2 - (N - 1) / (2.0 * h * r)
        ab = np.zeros((3, fi.size))
        ab[0, 1:] = upper[:-1]
        ab[1, :] = diag
        ab[2, :-1] = lower[1:]
        delta = solve_banded((1, 1), ab, res)
        step = 1.0
        accepted = False
        while step > 2.0**-30:
            trial = f.copy()
            trial[1:-1] = fi - step * delta
            np.clip(trial, -1.0, 1.0, out=trial)
            trial[0], trial[-1] = 0.0, 1.0
            tres, tscale = _scalar_residual(grid, spec, epsilon, trial, with_scale=True)
            tnorm = float(np.max(np.abs(tres)))
            if np.isfinite(tnorm) and tnorm < rnorm:
                f, res, rnorm, scale = trial, tres, tnorm, tscale
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # Updates below the float resolution of f cannot reduce the
            # residual further; the achievable floor is eps_mach times the
            # Jacobian scale. Accept there, otherwise report the stall.
            floor = 32.0 * _EPS_MACH * max(scale, float(np.max(np.abs(diag))))
            if rnorm <= floor:
                return f, it
            raise ConvergenceError(
                f"Newton line search stalled at eps={epsilon}: residual {rnorm:.3e}",
                iterations=it, residual=rnorm)
    raise ConvergenceError(
        f"no convergence after {opts.max_iterations} iterations at eps={epsilon}: "
        f"residual {rnorm:.3e}",
        iterations=opts.max_iterations, residual=rnorm)


def solve_nonescaping_profile(
    spec: PotentialSpec,
    grid: RadialGrid,
    epsilon: float,
    opts: SolverOptions | None = None,
    initial: np.ndarray | None = None,
) -> ProfilePair:
    """Solve the scalar profile ODE; returns a pair with g identically zero.

    ``initial`` overrides the f = r starting guess (used for warm starts in
    parameter sweeps).
    """
    if not (epsilon > 0.0 and np.isfinite(epsilon)):
        raise DomainError(f"epsilon must be positive and finite, got {epsilon}")
    opts = opts or SolverOptions()
    f0 = grid.nodes.copy() if initial is None else np.asarray(initial, float).copy()
    f0[0], f0[-1] = 0.0, 1.0
    try:
        f, _ = _scalar_newton(grid, spec, epsilon, f0, opts)
        _check_scalar_profile(grid, f)
    except ConvergenceError:
        # direct solve stalled or landed on a spurious discrete root
        f = _continuation_solve(grid, spec, epsilon, opts)
        _check_scalar_profile(grid, f)
    return ProfilePair(grid=grid, f_values=f, g_values=np.zeros_like(f),
                       epsilon=float(epsilon))


def _continuation_solve(grid, spec, epsilon, opts):
    """Halve eps from a convex large-eps start down to the target, warm-started."""
    f = grid.nodes.copy()
    eps = max(CONTINUATION_START, 4.0 * epsilon)
    while True:
        f, _ = _scalar_newton(grid, spec, eps, f, opts)
        if eps == epsilon:
            return f
        eps = max(eps / 2.0, epsilon)


def _check_scalar_profile(grid, f):
    interior = f[1:-1]
    if not (np.all(interior > 0.0) and np.all(interior < 1.0)):
        raise ConvergenceError("converged profile violates 0 < f < 1 on interior nodes")
    if not np.all(np.diff(f) > 0.0):
        raise ConvergenceError("converged profile is not strictly increasing")


def pair_residual_arrays(spec: PotentialSpec, pair: ProfilePair) -> tuple[np.ndarray, np.ndarray]:
    """Interior central-difference residuals of the coupled profile system.

    For g identically zero the g-equation residual vanishes and the f-equation
    reduces to the scalar profile ODE.
    """
    if pair.is_limit:
        raise DomainError("residual of the coupled system needs a finite epsilon")
    grid = pair.grid
    h = grid.spacing
    r = grid.nodes[1:-1]
    N = grid.dimension
    eps = float(pair.epsilon)
    f, g = pair.f_values, pair.g_values
    _, wp, _ = eval_potential(spec, 1.0 - f[1:-1] ** 2 - g[1:-1] ** 2)
    lap_f = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    lap_g = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h**2
    dfc = (f[2:] - f[:-2]) / (2.0 * h)
    dgc = (g[2:] - g[:-2]) / (2.0 * h)
    res_f = (-lap_f - (N - 1) / r * dfc + (N - 1) / r**2 * f[1:-1]
             - wp * f[1:-1] / eps**2)
    res_g = -lap_g - (N - 1) / r * dgc - wp * g[1:-1] / eps**2
    return res_f, res_g


def profile_residual(spec: PotentialSpec, pair: ProfilePair) -> float:
    """Max interior-node residual of both equations of the profile system."""
    res_f, res_g = pair_residual_arrays(spec, pair)
    return float(max(np.max(np.abs(res_f)), np.max(np.abs(res_g))))


def energy_I(spec: PotentialSpec, pair: ProfilePair) -> EnergyBreakdown:
    """Discrete reduced energy of a pair, term by term.

    The 1/|S^(N-1)| normalization of the paper-side full energy is implicit:
    all radial energies here are per unit sphere measure.
    """
    if pair.is_limit:
        raise DomainError("reduced energy needs a finite epsilon")
    grid = pair.grid
    N = grid.dimension
    f, g = pair.f_values, pair.g_values
    if N == 2 and f[0] != 0.0:
        raise DivergentEnergyError(
            "angular integral diverges: N=2 requires f(0)=0, got f(0)="
            f"{f[0]!r}")
    eps = float(pair.epsilon)
    df = derivative_samples(grid, f)
    dg = derivative_samples(grid, g)
    grad_f = 0.5 * integrate_radial(grid, df**2)
    grad_g = 0.5 * integrate_radial(grid, dg**2)
    r_in = grid.nodes[1:]
    angular = 0.5 * (N - 1) * integrate_radial_interior(grid, (f[1:] / r_in) ** 2)
    w = eval_potential(spec, 1.0 - f**2 - g**2)[0]
    pot = 0.5 / eps**2 * integrate_radial(grid, w)
    total = grad_f + grad_g + angular + pot
    return EnergyBreakdown(gradient_f=grad_f, gradient_g=grad_g,
                           angular=angular, potential=pot, total=total)
