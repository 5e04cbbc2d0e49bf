"""Equivariant sphere-valued harmonic-map profiles via angle parametrization.

Writing the pair as f = sin(theta), g = cos(theta) removes the pointwise
constraint f^2 + g^2 = 1 identically, leaving the unconstrained energy

    J(theta) = 1/2 int_0^1 [ (theta')^2 + (N-1) sin^2(theta) / r^2 ]
               r^(N-1) dr,   theta(1) = pi/2.

The profile ODE system for (f, g) carries the multiplier
Gamma = (f')^2 + (N-1) f^2/r^2 + (g')^2 from the unit-length constraint;
it reappears only in the residual verifier, never in the optimization.

Escaping-seed solves pin theta(0) = 0 (escaping profiles have f(0) = 0 in
every dimension); for N >= 7 that boundary value is incompatible with the
minimizing equator plateau and the discrete minimizer develops a collapsing
boundary layer at the axis, so only energies are asserted there. The equator
theta = pi/2 is an exact critical point of the discrete energy and is
returned unchanged from the equator seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import ConvergenceError, DivergentEnergyError, SizingError
from .radial import LIMIT_EPSILON, ProfilePair, RadialGrid, cell_flux_weights

SEED_ESCAPING = "escaping_seed"
SEED_EQUATOR = "equator_seed"

_EPS_MACH = float(np.finfo(float).eps)


@dataclass(frozen=True)
class HarmonicOptions:
    tolerance: float = 1e-9
    max_newton_iterations: int = 80
    max_descent_iterations: int = 4000


@dataclass(frozen=True)
class ThetaProfile:
    """Angle samples with theta(1) = pi/2; theta in [0, pi/2] after solving."""

    grid: RadialGrid
    theta_values: np.ndarray
    escaping_flag: bool

    def __post_init__(self):
        t = np.asarray(self.theta_values, dtype=float)
        if t.shape != self.grid.nodes.shape:
            raise SizingError("theta needs one value per node")
        if t[-1] != 0.5 * np.pi:
            raise ValueError(f"theta(1) must be pi/2 exactly, got {t[-1]!r}")
        object.__setattr__(self, "theta_values", t)
        t.setflags(write=False)

    def to_pair(self) -> ProfilePair:
        f, g = theta_to_pair_values(self.theta_values)
        return ProfilePair(grid=self.grid, f_values=f, g_values=g,
                           epsilon=LIMIT_EPSILON)


def theta_to_pair_values(theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(f, g) = (sin theta, cos theta), exact at theta = pi/2.

    Evaluated through the complement angle so that theta = pi/2 maps to
    (1, 0) exactly, keeping the class boundary data g(1) = 0 bitwise.
    """
    phi = 0.5 * np.pi - np.asarray(theta, float)
    return np.cos(phi), np.sin(phi)


def equator_energy(N: int) -> float:
    """Reduced energy (N-1)/(2(N-2)) of the equator map; finite only for N >= 3."""
    if int(N) != N or N < 2:
        raise SizingError(f"dimension N must be an integer >= 2, got {N}")
    if N == 2:
        raise DivergentEnergyError(
            "the equator map has divergent energy at N=2 "
            "(int r^-1 dr over (0,1) diverges)")
    return (N - 1) / (2.0 * (N - 2))


def harmonic_energy_value(grid: RadialGrid, theta: np.ndarray) -> float:
    """Discrete J(theta): cell-flux gradient plus node-lumped angular term."""
    flux = cell_flux_weights(grid)
    w = grid.quad_weights
    r = grid.nodes
    N = grid.dimension
    val = 0.5 * float(np.sum(flux * np.diff(theta) ** 2))
    val += 0.5 * (N - 1) * float(np.sum(w[1:] * (np.sin(theta[1:]) / r[1:]) ** 2))
    return val


def _energy_gradient(grid, theta):
    """Gradient wrt the interior unknowns theta_1..theta_{J-1}."""
    flux = cell_flux_weights(grid)
    w = grid.quad_weights
    r = grid.nodes
    N = grid.dimension
    fd = flux * np.diff(theta)
    grad = fd[:-1] - fd[1:]
    grad = grad + 0.5 * (N - 1) * w[1:-1] * np.sin(2.0 * theta[1:-1]) / r[1:-1] ** 2
    return grad


def _reflect_range(theta):
    """Reflect angle samples into [0, pi/2] (monotone-branch clamp)."""
    half_pi = 0.5 * np.pi
    t = np.abs(theta)
    over = t > half_pi
    t[over] = np.pi - t[over]
    np.clip(t, 0.0, half_pi, out=t)
    return t


def solve_harmonic_theta(N: int, grid: RadialGrid, init: str,
                         opts: HarmonicOptions | None = None) -> ThetaProfile:
    """Minimize the discrete angle energy from the requested seed.

    escaping_seed: theta = (pi/2) r with theta(0) = 0 pinned.
    equator_seed: theta = pi/2 everywhere, an exact discrete critical point.
    """
    if grid.dimension != N:
        raise SizingError(f"grid was built for N={grid.dimension}, not N={N}")
    opts = opts or HarmonicOptions()
    half_pi = 0.5 * np.pi
    if init == SEED_ESCAPING:
        theta = half_pi * grid.nodes.copy()
        left = 0.0
    elif init == SEED_EQUATOR:
        theta = np.full(grid.nodes.size, half_pi)
        left = half_pi
    else:
        raise ValueError(f"unknown seed {init!r}")
    theta[0], theta[-1] = left, half_pi

    _theta_descent(grid, theta, left, opts)
    theta, _ = _theta_newton(grid, theta, left, opts)

    # Escaping profiles keep a mesh-independent transition radius (> 0.05 for
    # every 2 <= N <= 6); the N >= 7 plateau deviates from pi/2 only inside a
    # boundary layer of O(h) at the axis.
    probe = float(np.interp(0.05, grid.nodes, theta))
    escaped = bool(probe < half_pi - 0.05)
    return ThetaProfile(grid=grid, theta_values=theta, escaping_flag=escaped)


def _theta_descent(grid, theta, left, opts):
    """Monotone BB descent; mutates theta toward the Newton basin."""
    w = grid.quad_weights
    mass = np.maximum(w[1:-1], grid.spacing**2)
    energy = harmonic_energy_value(grid, theta)
    grad = _energy_gradient(grid, theta)
    step = 1e-3 * grid.spacing**2
    prev = None
    energy_at_check = np.inf
    for it in range(opts.max_descent_iterations):
        if it % 25 == 0:
            if float(np.max(np.abs(grad / mass))) < 1e-4:
                return
            if it > 0 and energy_at_check - energy < max(1e-15, 1e-13 * abs(energy)):
                return
            energy_at_check = energy
        if prev is not None:
            du = theta[1:-1] - prev[0]
            dg = grad - prev[1]
            denom = float(du @ dg)
            if denom > 0.0:
                step = min(float(du @ du) / denom, 10.0)
        prev = (theta[1:-1].copy(), grad.copy())
        s = step
        accepted = False
        for _ in range(60):
            trial = theta.copy()
            trial[1:-1] -= s * grad
            trial = _reflect_range(trial)
            trial[0], trial[-1] = left, 0.5 * np.pi
            te = harmonic_energy_value(grid, trial)
            if np.isfinite(te) and te < energy:
                theta[:] = trial
                energy = te
                accepted = True
                break
            s *= 0.5
        if not accepted:
            return
        grad = _energy_gradient(grid, theta)


def _theta_newton(grid, theta, left, opts):
    """Damped Newton on the energy gradient; returns (theta, iterations)."""
    flux = cell_flux_weights(grid)
    w = grid.quad_weights
    r = grid.nodes
    N = grid.dimension
    mass = np.maximum(w[1:-1], grid.spacing**2)
    grad = _energy_gradient(grid, theta)
    gnorm = float(np.max(np.abs(grad / mass)))
    jac_scale = float(np.max((flux[:-1] + flux[1:]) / mass)) + (N - 1) / grid.spacing**2
    for it in range(opts.max_newton_iterations):
        if gnorm < opts.tolerance:
            return theta, it
        diag = (flux[:-1] + flux[1:]
                + (N - 1) * w[1:-1] * np.cos(2.0 * theta[1:-1]) / r[1:-1] ** 2)
        off = -flux[1:-1]
        ab = np.zeros((3, diag.size))
        ab[0, 1:] = off
        ab[1, :] = diag
        ab[2, :-1] = off
        try:
            delta = solve_banded((1, 1), ab, grad)
        except np.linalg.LinAlgError:
            delta = grad / diag
        step = 1.0
        accepted = False
        while step > 2.0**-30:
            trial = theta.copy()
            trial[1:-1] -= step * delta
            trial = _reflect_range(trial)
            trial[0], trial[-1] = left, 0.5 * np.pi
            tgrad = _energy_gradient(grid, trial)
            tnorm = float(np.max(np.abs(tgrad / mass)))
            if np.isfinite(tnorm) and tnorm < gnorm:
                theta, grad, gnorm = trial, tgrad, tnorm
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if gnorm <= 32.0 * _EPS_MACH * jac_scale:
                return theta, it
            raise ConvergenceError(
                f"harmonic Newton stalled: scaled gradient {gnorm:.3e}",
                iterations=it, residual=gnorm)
    raise ConvergenceError(
        f"harmonic Newton: no convergence in {opts.max_newton_iterations} "
        f"iterations, scaled gradient {gnorm:.3e}",
        iterations=opts.max_newton_iterations, residual=gnorm)


# fourth-order finite-difference stencils (integer coefficients over 12h and
# 12h^2; rows annihilate constants exactly)
_D1_CENTER = np.array([1.0, -8.0, 0.0, 8.0, -1.0])
_D1_EDGE0 = np.array([-25.0, 48.0, -36.0, 16.0, -3.0])
_D1_EDGE1 = np.array([-3.0, -10.0, 18.0, -6.0, 1.0])
_D2_CENTER = np.array([-1.0, 16.0, -30.0, 16.0, -1.0])
_D2_EDGE0 = np.array([45.0, -154.0, 214.0, -156.0, 61.0, -10.0])
_D2_EDGE1 = np.array([10.0, -15.0, -4.0, 14.0, -6.0, 1.0])


def derivative4(samples: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order first derivative of uniformly spaced samples."""
    s = np.asarray(samples, float)
    d = np.empty_like(s)
    d[2:-2] = (s[:-4] * _D1_CENTER[0] + s[1:-3] * _D1_CENTER[1]
               + s[3:-1] * _D1_CENTER[3] + s[4:] * _D1_CENTER[4]) / (12.0 * h)
    d[0] = (_D1_EDGE0 @ s[:5]) / (12.0 * h)
    d[1] = (_D1_EDGE1 @ s[:5]) / (12.0 * h)
    d[-2] = -(_D1_EDGE1 @ s[-5:][::-1]) / (12.0 * h)
    d[-1] = -(_D1_EDGE0 @ s[-5:][::-1]) / (12.0 * h)
    return d


def second_derivative4(samples: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order second derivative of uniformly spaced samples."""
    s = np.asarray(samples, float)
    d = np.empty_like(s)
    d[2:-2] = (s[:-4] * _D2_CENTER[0] + s[1:-3] * _D2_CENTER[1]
               + s[2:-2] * _D2_CENTER[2] + s[3:-1] * _D2_CENTER[3]
               + s[4:] * _D2_CENTER[4]) / (12.0 * h * h)
    d[0] = (_D2_EDGE0 @ s[:6]) / (12.0 * h * h)
    d[1] = (_D2_EDGE1 @ s[:6]) / (12.0 * h * h)
    d[-2] = (_D2_EDGE1 @ s[-6:][::-1]) / (12.0 * h * h)
    d[-1] = (_D2_EDGE0 @ s[-6:][::-1]) / (12.0 * h * h)
    return d


def harmonic_residual(N: int, theta: ThetaProfile) -> float:
    """Max interior residual of the constrained profile system.

    Builds (f, g) = (sin theta, cos theta), the multiplier
    Gamma = (f')^2 + (N-1) f^2/r^2 + (g')^2, and substitutes into both
    equations with fourth-order differences (second-order ones lose an order
    at the axis through the (N-1) f'/r term).
    """
    grid = theta.grid
    if grid.dimension != N:
        raise SizingError(f"profile grid has N={grid.dimension}, not N={N}")
    h = grid.spacing
    r = grid.nodes[1:-1]
    f, g = theta_to_pair_values(theta.theta_values)
    df = derivative4(f, h)[1:-1]
    dg = derivative4(g, h)[1:-1]
    d2f = second_derivative4(f, h)[1:-1]
    d2g = second_derivative4(g, h)[1:-1]
    fi, gi = f[1:-1], g[1:-1]
    # share the angular coefficient between operator and multiplier so the
    # equator pair (f=1, g=0) gives an exactly zero residual
    angular = (N - 1) / r**2
    gamma = df**2 + angular * fi * fi + dg**2
    res_f = -d2f - (N - 1) / r * df + angular * fi - gamma * fi
    res_g = -d2g - (N - 1) / r * dg - gamma * gi
    return float(max(np.max(np.abs(res_f)), np.max(np.abs(res_g))))


def equator_instability_probe(N: int, grid: RadialGrid) -> float:
    """Smallest Rayleigh value of the second variation at the equator map.

    The form Q(0, q) = int [ (q')^2 - (N-1)/r^2 q^2 ] r^(N-1) dr over
    compactly supported q is discretized with Dirichlet conditions at both
    ends; the returned value is negative exactly when an instability
    direction exists (N <= 6).
    """
    if int(N) != N or N < 2:
        raise SizingError(f"dimension N must be an integer >= 2, got {N}")
    if grid.dimension != N:
        raise SizingError(f"grid was built for N={grid.dimension}, not N={N}")
    from .spectral import _build_system, principal_eigenpair

    r = grid.nodes
    q = np.zeros_like(r)
    q[1:] = -(N - 1) / r[1:] ** 2
    system = _build_system(grid, q, left_natural=False, epsilon=None)
    return principal_eigenpair(system).eigenvalue
