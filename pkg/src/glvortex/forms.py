"""Quadratic forms around the non-escaping profile and the Hardy margin.

The form

    F_eps(psi) = int_0^1 [ (psi')^2 - eps^-2 W'(1 - f_eps^2) psi^2 ] r^(N-1) dr

is evaluated with the same discretization the eigen-assembly uses
(cell-midpoint fluxes for the gradient, node-lumped potential), so the
Rayleigh identity F_eps(psi_1) = l(eps) holds to machine precision for the
computed eigenfunction rather than merely to quadrature accuracy.

The second variation of the reduced energy at (f_eps, 0) is

    Q_eps(alpha, beta) = F_eps(alpha) + F_eps(beta)
        + int [ (N-1)/r^2 alpha^2 + 2 eps^-2 W''(1 - f_eps^2) f_eps^2 alpha^2 ]
          r^(N-1) dr;

its beta-part carries no extra terms, which is what makes the instability of
the non-escaping profile equivalent to l(eps) < 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BoundaryConditionError, LengthMismatchError
from .potential import PotentialSpec, eval_potential
from .radial import ProfilePair, RadialGrid, cell_flux_weights
from .spectral import hardy_constant


@dataclass(frozen=True)
class TestFunction:
    """Node samples of a radial test function with Dirichlet value 0 at r=1."""

    grid: RadialGrid
    values: np.ndarray
    second: np.ndarray | None = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.nodes.shape:
            raise LengthMismatchError("test function needs one value per node")
        if v[-1] != 0.0:
            raise BoundaryConditionError(
                f"test functions must vanish at r=1 exactly, got {v[-1]!r}")
        object.__setattr__(self, "values", v)
        v.setflags(write=False)


def _check_profile(f_profile: ProfilePair, epsilon: float) -> None:
    if f_profile.is_limit or float(f_profile.epsilon) != float(epsilon):
        raise ValueError(
            f"profile was solved at eps={f_profile.epsilon}, form requested at "
            f"eps={epsilon}")
    if np.any(f_profile.g_values != 0.0):
        raise ValueError("forms are taken around the non-escaping (g=0) profile")


def quadratic_form_values(grid: RadialGrid, node_potential: np.ndarray,
                          values: np.ndarray) -> float:
    """Flux-gradient plus node-lumped potential form on node samples."""
    flux = cell_flux_weights(grid)
    diffs = values[1:] - values[:-1]
    grad = float(np.sum(flux * diffs * diffs))
    pot = float(np.sum(grid.quad_weights * node_potential * values * values))
    return grad + pot


def evaluate_F(spec: PotentialSpec, f_profile: ProfilePair, epsilon: float,
               psi: TestFunction) -> float:
    """The quadratic form of the linearized operator at the scalar profile."""
    _check_profile(f_profile, epsilon)
    _, wp, _ = eval_potential(spec, 1.0 - f_profile.f_values**2)
    q = -np.asarray(wp, float) / epsilon**2
    return quadratic_form_values(psi.grid, q, psi.values)


def evaluate_Q(spec: PotentialSpec, f_profile: ProfilePair, epsilon: float,
               alpha: TestFunction, beta: TestFunction) -> float:
    """Second variation of the reduced energy at (f_eps, 0) in direction (alpha, beta)."""
    _check_profile(f_profile, epsilon)
    grid = f_profile.grid
    N = grid.dimension
    f = f_profile.f_values
    _, _, wpp = eval_potential(spec, 1.0 - f**2)
    a = alpha.values
    w = grid.quad_weights
    r = grid.nodes
    # both extra terms carry the zero weight at r=0
    angular = (N - 1) * float(np.sum(w[1:] * (a[1:] / r[1:]) ** 2))
    curvature = 2.0 / epsilon**2 * float(np.sum(w * wpp * f * f * a * a))
    return (evaluate_F(spec, f_profile, epsilon, alpha)
            + evaluate_F(spec, f_profile, epsilon, beta)
            + angular + curvature)


def hardy_margin(spec: PotentialSpec, f_profile: ProfilePair, epsilon: float,
                 psi: TestFunction) -> float:
    """F_eps(psi) minus the Hardy constant times the singular norm int psi^2/r^2."""
    grid = f_profile.grid
    w = grid.quad_weights
    r = grid.nodes
    v = psi.values
    singular = float(np.sum(w[1:] * (v[1:] / r[1:]) ** 2))
    return (evaluate_F(spec, f_profile, epsilon, psi)
            - hardy_constant(grid.dimension) * singular)
