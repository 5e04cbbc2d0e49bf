"""Escaping radial profiles: minimize the reduced energy over the pair class.

The coupled system for a pair (f, g) on (0,1) is

    -f'' - (N-1)/r f' + (N-1)/r^2 f = eps^-2 W'(1 - f^2 - g^2) f,
    -g'' - (N-1)/r g'               = eps^-2 W'(1 - f^2 - g^2) g,
    f(1) = 1, g(1) = 0,

with f(0) = 0 essential and the natural condition g'(0) = 0 at the axis.
The solver minimizes the discrete reduced energy (cell-flux gradients plus
node-lumped potential) by Barzilai-Borwein descent with Armijo backtracking,
then polishes with damped Newton on the central-difference residual of the
system; the axis row for g is the regularized limit -2N (g_1 - g_0)/h^2 =
eps^-2 W'(1 - g_0^2) g_0.

Descent before Newton matters: for eps < eps_N the non-escaping profile is a
saddle of the energy, and Newton started near it would converge back to it.
The descent phase rides the unstable direction down into the escaped basin
first. Whether a converged profile "escaped" is decided by max g against a
threshold separating O(1) escaped values from the numerically-zero g of
non-escaped runs.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .errors import ConvergenceError
from .potential import PotentialSpec, eval_potential
from .profiles import (
    EnergyBreakdown,
    SolverOptions,
    energy_I,
    profile_residual,
    solve_nonescaping_profile,
)
from .radial import ProfilePair, RadialGrid, cell_flux_weights
from .spectral import (
    _sturm_count,
    assemble_linearized,
    find_epsilon_N,
    principal_eigenpair,
)

logger = logging.getLogger(__name__)

_EPS_MACH = float(np.finfo(float).eps)

INIT_EIGENFUNCTION = "eigenfunction_bump"
INIT_LINEAR = "linear_bump"
INIT_RANDOM = "random_bump"


@dataclass(frozen=True)
class EscapeOptions:
    tolerance: float = 1e-10
    max_newton_iterations: int = 80
    max_descent_iterations: int = 8000
    switch_residual: float = 1e-4
    escape_threshold: float = 1e-3
    init: str = INIT_EIGENFUNCTION
    seed: int = 0


@dataclass(frozen=True)
class EscapeResult:
    pair: ProfilePair
    escaped: bool
    energy: EnergyBreakdown
    iterations: int
    residual: float


@dataclass(frozen=True)
class DichotomyRow:
    epsilon: float
    escaped: bool | str | None
    I_escaping: float | None
    I_nonescaping: float | None
    energy_gap: float | None


@dataclass(frozen=True)
class DichotomyReport:
    N: int
    epsilon_N: float
    rows: tuple[DichotomyRow, ...]

    def to_dict(self) -> dict:
        return {
            "N": self.N,
            "epsilon_N": self.epsilon_N,
            "rows": [
                {
                    "epsilon": r.epsilon,
                    "escaped": r.escaped,
                    "I_escaping": r.I_escaping,
                    "I_nonescaping": r.I_nonescaping,
                    "energy_gap": r.energy_gap,
                }
                for r in self.rows
            ],
        }


def _full_arrays(grid, f_int, g_free):
    f = np.concatenate(([0.0], f_int, [1.0]))
    g = np.concatenate((g_free, [0.0]))
    return f, g


def reduced_energy_value(spec, grid, epsilon, f, g):
    """Discrete reduced energy of full node arrays (flux + lumped form)."""
    flux = cell_flux_weights(grid)
    w = grid.quad_weights
    r = grid.nodes
    N = grid.dimension
    val = 0.5 * float(np.sum(flux * np.diff(f) ** 2) + np.sum(flux * np.diff(g) ** 2))
    val += 0.5 * (N - 1) * float(np.sum(w[1:] * (f[1:] / r[1:]) ** 2))
    wvals = eval_potential(spec, 1.0 - f**2 - g**2)[0]
    val += 0.5 / epsilon**2 * float(np.sum(w * wvals))
    return val


def _objective_gradient(spec, grid, epsilon, f, g):
    """Gradient of the discrete reduced energy wrt (f_1..f_{J-1}, g_0..g_{J-1})."""
    flux = cell_flux_weights(grid)
    w = grid.quad_weights
    r = grid.nodes
    N = grid.dimension
    _, wp, _ = eval_potential(spec, 1.0 - f**2 - g**2)
    fdf = flux * np.diff(f)
    fdg = flux * np.diff(g)
    grad_f = (fdf[:-1] - fdf[1:]
              + w[1:-1] * ((N - 1) * f[1:-1] / r[1:-1] ** 2
                           - wp[1:-1] * f[1:-1] / epsilon**2))
    grad_g_free = np.empty(grid.node_count)
    grad_g_free[0] = -fdg[0]
    grad_g_free[1:] = fdg[:-1] - fdg[1:] - w[1:-1] * wp[1:-1] * g[1:-1] / epsilon**2
    return grad_f, grad_g_free


def _project_unit_ball(f, g):
    """Scale (f, g) pointwise onto the closed unit ball where it escapes it."""
    norm2 = f * f + g * g
    mask = norm2 > 1.0 + 1e-6
    if np.any(mask):
        scale = 1.0 / np.sqrt(norm2[mask])
        f = f.copy()
        g = g.copy()
        f[mask] *= scale
        g[mask] *= scale
        logger.info("projected %d nodes back onto the unit ball", int(mask.sum()))
    return f, g


def _system_residual(spec, grid, epsilon, f, g, with_scale=False):
    """Central-difference residuals: f rows 1..J-1, g axis row, g rows 1..J-1."""
    h = grid.spacing
    r = grid.nodes[1:-1]
    N = grid.dimension
    _, wp, _ = eval_potential(spec, 1.0 - f[1:-1] ** 2 - g[1:-1] ** 2)
    lap_f = (f[2:] - 2.0 * f[1:-1] + f[:-2]) / h**2
    lap_g = (g[2:] - 2.0 * g[1:-1] + g[:-2]) / h**2
    dfc = (f[2:] - f[:-2]) / (2.0 * h)
    dgc = (g[2:] - g[:-2]) / (2.0 * h)
    t_f1 = -lap_f
    t_f2 = -(N - 1) / r * dfc
    t_f3 = (N - 1) / r**2 * f[1:-1]
    t_f4 = -wp * f[1:-1] / epsilon**2
    res_f = t_f1 + t_f2 + t_f3 + t_f4
    t_g1 = -lap_g
    t_g2 = -(N - 1) / r * dgc
    t_g4 = -wp * g[1:-1] / epsilon**2
    res_g = t_g1 + t_g2 + t_g4
    wp0 = float(eval_potential(spec, 1.0 - g[0] ** 2)[1])
    res_axis = -2.0 * N * (g[1] - g[0]) / h**2 - wp0 * g[0] / epsilon**2
    if not with_scale:
        return res_f, res_axis, res_g
    scale = float(max(
        np.max(np.abs(t_f1) + np.abs(t_f2) + np.abs(t_f3) + np.abs(t_f4)),
        np.max(np.abs(t_g1) + np.abs(t_g2) + np.abs(t_g4)),
        abs(2.0 * N * (g[1] - g[0]) / h**2) + abs(wp0 * g[0] / epsilon**2),
        2.0 * N / h**2,
    ))
    return res_f, res_axis, res_g, scale


def _residual_norm(spec, grid, epsilon, f, g):
    res_f, res_axis, res_g = _system_residual(spec, grid, epsilon, f, g)
    return float(max(np.max(np.abs(res_f)), abs(res_axis), np.max(np.abs(res_g))))


def _newton_jacobian(spec, grid, epsilon, f, g):
    h = grid.spacing
    r = grid.nodes[1:-1]
    N = grid.dimension
    J = grid.node_count
    n = J - 1
    fi, gi = f[1:-1], g[1:-1]
    _, wp, wpp = eval_potential(spec, 1.0 - fi**2 - gi**2)
    inv_eps2 = 1.0 / epsilon**2

    dff = 2.0 / h**2 + (N - 1) / r**2 - inv_eps2 * (wp - 2.0 * fi**2 * wpp)
    dgg = 2.0 / h**2 - inv_eps2 * (wp - 2.0 * gi**2 * wpp)
    dfg = inv_eps2 * 2.0 * fi * gi * wpp  # d res_f / d g_i and d res_g / d f_i
    lower = -1.0 / h**2 + (N - 1) / (2.0 * h * r)
    upper = -1.0 / h**2 - (N - 1) / (2.0 * h * r)

    # unknown ordering: f_1..f_{J-1} (0..n-1), g_0..g_{J-1} (n..n+J-1)
    rows, cols, vals = [], [], []

    def add(i, j, v):
        rows.append(i)
        cols.append(j)
        vals.append(v)

    for k in range(n):  # f rows
        add(k, k, dff[k])
        if k > 0:
            add(k, k - 1, lower[k])
        if k < n - 1:
            add(k, k + 1, upper[k])
        add(k, n + 1 + k, dfg[k])
    # g axis row (index n): unknowns g_0 (col n) and g_1 (col n+1)
    _, wp0, wpp0 = (float(x) for x in eval_potential(spec, 1.0 - g[0] ** 2))
    add(n, n, 2.0 * N / h**2 - inv_eps2 * (wp0 - 2.0 * g[0] ** 2 * wpp0))
    add(n, n + 1, -2.0 * N / h**2)
    for k in range(n):  # g rows for nodes 1..J-1 (index n+1+k)
        i = n + 1 + k
        add(i, i, dgg[k])
        add(i, n + k, lower[k])  # couples g_{k} (node k), incl. g_0 via k=0
        if k < n - 1:
            add(i, i + 1, upper[k])
        add(i, k, dfg[k])
    mat = sp.csc_matrix((vals, (rows, cols)), shape=(n + 1 + n, n + 1 + n))
    return mat


def _newton_polish(spec, grid, epsilon, f, g, opts):
    """Damped Newton on the coupled central-difference system."""
    reslist = _system_residual(spec, grid, epsilon, f, g, with_scale=True)
    res_f, res_axis, res_g, scale = reslist
    rnorm = float(max(np.max(np.abs(res_f)), abs(res_axis), np.max(np.abs(res_g))))
    n = grid.node_count - 1
    for it in range(opts.max_newton_iterations):
        if not np.isfinite(rnorm):
            raise ConvergenceError("NaN residual in escaping Newton phase",
                                   iterations=it, residual=rnorm)
        if rnorm < opts.tolerance:
            return f, g, it, rnorm
        mat = _newton_jacobian(spec, grid, epsilon, f, g)
        rhs = np.concatenate((res_f, [res_axis], res_g))
        delta = spsolve(mat, rhs)
        step = 1.0
        accepted = False
        while step > 2.0**-30:
            tf = f.copy()
            tg = g.copy()
            tf[1:-1] -= step * delta[:n]
            tg[:-1] -= step * delta[n:]
            tf, tg = _project_unit_ball(tf, tg)
            tf[0], tf[-1], tg[-1] = 0.0, 1.0, 0.0
            t_res = _system_residual(spec, grid, epsilon, tf, tg, with_scale=True)
            tnorm = float(max(np.max(np.abs(t_res[0])), abs(t_res[1]),
                              np.max(np.abs(t_res[2]))))
            if np.isfinite(tnorm) and tnorm < rnorm:
                f, g, rnorm, scale = tf, tg, tnorm, t_res[3]
                res_f, res_axis, res_g = t_res[0], t_res[1], t_res[2]
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if rnorm <= 32.0 * _EPS_MACH * scale:
                return f, g, it, rnorm
            raise ConvergenceError(
                f"escaping Newton stalled: residual {rnorm:.3e}",
                iterations=it, residual=rnorm)
    raise ConvergenceError(
        f"escaping Newton: no convergence in {opts.max_newton_iterations} "
        f"iterations, residual {rnorm:.3e}",
        iterations=opts.max_newton_iterations, residual=rnorm)


def _initial_g(grid, init, seed, eigenfunction):
    r = grid.nodes
    if init == INIT_EIGENFUNCTION:
        psi = eigenfunction
        return 0.5 * psi / float(np.max(psi))
    if init == INIT_LINEAR:
        return 0.3 * (1.0 - r)
    if init == INIT_RANDOM:
        rng = np.random.default_rng(seed)
        amp = rng.uniform(0.2, 0.6)
        center = rng.uniform(0.2, 0.6)
        width = rng.uniform(0.15, 0.35)
        return amp * np.exp(-(((r - center) / width) ** 2)) * (1.0 - r**2)
    raise ValueError(f"unknown initialization {init!r}")


def solve_escaping_profile(
    spec: PotentialSpec,
    grid: RadialGrid,
    epsilon: float,
    opts: EscapeOptions | None = None,
) -> EscapeResult:
    """Minimize the discrete reduced energy over pairs in the profile class.

    Requires a strictly convex potential (the uniqueness hypotheses of the
    escaping theory). The returned profile has g >= 0; the g -> -g mirror
    solution is identified with it.
    """
    if not spec.strictly_convex:
        raise ValueError("escaping solves require a strictly convex potential")
    opts = opts or EscapeOptions()
    base = solve_nonescaping_profile(spec, grid, epsilon,
                                     SolverOptions(tolerance=opts.tolerance))
    eig = principal_eigenpair(assemble_linearized(spec, base, epsilon))
    f = base.f_values.copy()
    g_full = _initial_g(grid, opts.init, opts.seed, eig.eigenfunction)
    g = g_full.copy()
    g[-1] = 0.0
    f, g = _project_unit_ball(f, g)
    f[0], f[-1], g[-1] = 0.0, 1.0, 0.0

    # Descent only has to carry the iterate into the right basin; Newton does
    # the convergence. If Newton lands on the unstable saddle or an invalid
    # root, descend further and retry.
    budgets = (400, 1600, opts.max_descent_iterations)
    total_bb = 0
    last_exc: ConvergenceError | None = None
    for budget in budgets:
        total_bb += _descent_phase(spec, grid, epsilon, f, g, opts, budget)
        try:
            tf, tg = f.copy(), g.copy()
            if float(np.sum(grid.quad_weights * tg)) < 0.0:
                tg = -tg
            tf, tg, newton_iters, rnorm = _newton_polish(
                spec, grid, epsilon, tf, tg, opts)
            if float(np.sum(grid.quad_weights * tg)) < 0.0:
                tg = -tg
            escaped = bool(np.max(tg) > opts.escape_threshold)
            if not escaped and _g_block_negative_directions(
                    spec, grid, epsilon, tf, tg) > 0:
                raise ConvergenceError(
                    "converged to the unstable non-escaping critical point; "
                    "the second variation in g has a negative direction")
            pair = ProfilePair(grid=grid, f_values=tf, g_values=tg,
                               epsilon=float(epsilon))
            _check_escape_invariants(pair, escaped)
        except ConvergenceError as exc:
            last_exc = exc
            continue
        energy = energy_I(spec, pair)
        return EscapeResult(pair=pair, escaped=escaped, energy=energy,
                            iterations=total_bb + newton_iters, residual=rnorm)
    raise last_exc if last_exc is not None else ConvergenceError(
        "escaping solve failed")


def _descent_phase(spec, grid, epsilon, f, g, opts, max_iterations):
    """Monotone Barzilai-Borwein descent on the discrete reduced energy.

    Mutates f, g in place; returns the iteration count. Stops once the
    scaled gradient is inside the Newton basin, the energy stagnates at
    float resolution, or the budget runs out.
    """
    w = grid.quad_weights
    # mass scale for a pointwise residual proxy; floored near the axis where
    # the volume weights underflow the useful range in high dimension
    mass_f = np.maximum(w[1:-1], grid.spacing**2)
    mass_g = np.maximum(np.concatenate(([grid.spacing ** grid.dimension],
                                        w[1:-1])), grid.spacing**2)
    energy = reduced_energy_value(spec, grid, epsilon, f, g)
    grad_f, grad_g = _objective_gradient(spec, grid, epsilon, f, g)
    step = 1e-3 * grid.spacing**2
    prev = None
    check_every = 25
    energy_at_check = np.inf
    for it in range(max_iterations):
        if it % check_every == 0:
            scaled = max(float(np.max(np.abs(grad_f / mass_f))),
                         float(np.max(np.abs(grad_g / mass_g))))
            if scaled < opts.switch_residual:
                return it
            if it > 0:
                stall = max(1e-15, 1e-13 * abs(energy))
                if energy_at_check - energy < stall:
                    return it
            energy_at_check = energy
        if prev is not None:
            du = np.concatenate((f[1:-1] - prev[0][1:-1], g[:-1] - prev[1][:-1]))
            dg = np.concatenate((grad_f - prev[2], grad_g - prev[3]))
            denom = float(du @ dg)
            if denom > 0.0:
                step = min(float(du @ du) / denom, 10.0)
        prev = (f.copy(), g.copy(), grad_f.copy(), grad_g.copy())
        # Armijo backtracking on the energy
        accepted = False
        s = step
        for _ in range(60):
            tf = f.copy()
            tg = g.copy()
            tf[1:-1] -= s * grad_f
            tg[:-1] -= s * grad_g
            tf, tg = _project_unit_ball(tf, tg)
            tf[0], tf[-1], tg[-1] = 0.0, 1.0, 0.0
            te = reduced_energy_value(spec, grid, epsilon, tf, tg)
            if np.isfinite(te) and te < energy:
                f[:], g[:] = tf, tg
                energy = te
                accepted = True
                break
            s *= 0.5
        if not accepted:
            return it  # flat to float resolution; hand off to Newton
        grad_f, grad_g = _objective_gradient(spec, grid, epsilon, f, g)
    return max_iterations


def _g_block_negative_directions(spec, grid, epsilon, f, g) -> int:
    """Negative-eigenvalue count of the g-block Hessian of the reduced energy.

    The block over the unknowns g_0..g_{J-1} is tridiagonal (cell fluxes plus
    the lumped potential curvature); a Sturm count below a small negative
    shift gives its inertia, which decides whether a g ~ 0 critical point is
    a minimizer or the unstable saddle.
    """
    flux = cell_flux_weights(grid)
    w = grid.quad_weights
    t = 1.0 - f**2 - g**2
    _, wp, wpp = eval_potential(spec, t)
    curvature = -w * (wp - 2.0 * g**2 * wpp) / epsilon**2
    diag = np.empty(grid.node_count)
    diag[0] = flux[0] + curvature[0]
    diag[1:] = flux[:-1] + flux[1:] + curvature[1:-1]
    off = -flux[:-1]
    shift = -1e-6 * max(1.0, float(np.max(np.abs(diag))) * grid.spacing**2)
    return _sturm_count(diag, off, shift)


def _check_escape_invariants(pair: ProfilePair, escaped: bool) -> None:
    f, g = pair.f_values, pair.g_values
    if not escaped:
        return
    interior = slice(1, -1)
    if not np.all(g[:-1] > 0.0):
        raise ConvergenceError("escaped profile must have g > 0 up to r < 1")
    if not np.all(f[interior] ** 2 + g[interior] ** 2 < 1.0):
        raise ConvergenceError("escaped profile must satisfy f^2 + g^2 < 1")
    if not np.all(np.diff(f) > 0.0):
        raise ConvergenceError("escaped profile must have f strictly increasing")
    if not np.all(np.diff(g) < 0.0):
        raise ConvergenceError("escaped profile must have g strictly decreasing")


def escaping_residual(spec: PotentialSpec, result: EscapeResult) -> float:
    """Max interior residual of the coupled system at a converged result."""
    return profile_residual(spec, result.pair)


def classify_dichotomy(
    spec: PotentialSpec,
    N: int,
    grid: RadialGrid,
    epsilons,
    opts: EscapeOptions | None = None,
    bracket_tol: float = 1e-6,
) -> DichotomyReport:
    """Sweep epsilon values and report the escaping/non-escaping split.

    Rows within bracket_tol of epsilon_N are classified "marginal" (the
    discretization cannot resolve the exact threshold there). Solver failures
    are recorded per row without aborting the sweep.
    """
    opts = opts or EscapeOptions()
    eps_n = find_epsilon_N(spec, N, grid, tol=bracket_tol)
    rows = []
    for eps in epsilons:
        eps = float(eps)
        try:
            ne_profile = solve_nonescaping_profile(spec, grid, eps)
            i_ne = energy_I(spec, ne_profile).total
            result = solve_escaping_profile(spec, grid, eps, opts)
            i_pair = result.energy.total
            escaped: bool | str = result.escaped
            if abs(eps - eps_n) <= bracket_tol:
                escaped = "marginal"
            rows.append(DichotomyRow(
                epsilon=eps,
                escaped=escaped,
                I_escaping=i_pair if result.escaped else None,
                I_nonescaping=i_ne,
                energy_gap=i_ne - i_pair,
            ))
        except ConvergenceError as exc:
            logger.warning("dichotomy row eps=%g failed: %s", eps, exc)
            rows.append(DichotomyRow(epsilon=eps, escaped=None, I_escaping=None,
                                     I_nonescaping=None, energy_gap=None))
    return DichotomyReport(N=N, epsilon_N=eps_n, rows=tuple(rows))
