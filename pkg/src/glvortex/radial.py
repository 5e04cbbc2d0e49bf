"""Uniform radial grids on [0,1] with r^(N-1) dr quadrature, and sampled profiles.

Everything downstream (profile solvers, eigenproblems, quadratic forms) shares
the grid and the two primitive operations here: weighted integration against
the radial volume density and second-order finite differencing of node samples.

Quadrature weights are the exact per-cell moments of r^(N-1) against the
piecewise-linear interpolant of the samples (hat-function lumping), except that
the weight at r=0 is forced to zero. That zero weight is what lets integrands
with a 1/r^2 factor be summed without ever evaluating them at the origin; the
induced error is O(h^N), below the O(h^2) accuracy of the rule itself.
"""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .errors import BoundaryConditionError, LengthMismatchError, SizingError

#: epsilon marker for profiles of the harmonic-map limit system.
LIMIT_EPSILON = "limit"

MIN_DIMENSION = 2
MIN_NODE_COUNT = 16


@dataclass(frozen=True)
class RadialGrid:
    """Uniform mesh r_i = i/J on [0,1] with weights for integral r^(N-1) dr."""

    dimension: int
    node_count: int
    nodes: np.ndarray
    quad_weights: np.ndarray

    @property
    def spacing(self) -> float:
        return 1.0 / self.node_count

    def __post_init__(self):
        self.nodes.setflags(write=False)
        self.quad_weights.setflags(write=False)


def build_grid(N: int, J: int) -> RadialGrid:
    """Build the radial grid for dimension N with J cells (J+1 nodes)."""
    if int(N) != N or N < MIN_DIMENSION:
        raise SizingError(f"dimension N must be an integer >= {MIN_DIMENSION}, got {N}")
    if int(J) != J or J < MIN_NODE_COUNT:
        raise SizingError(f"node count J must be an integer >= {MIN_NODE_COUNT}, got {J}")
    N, J = int(N), int(J)
    nodes = np.arange(J + 1) / J
    weights = _hat_moments(nodes, N)
    weights[0] = 0.0
    return RadialGrid(dimension=N, node_count=J, nodes=nodes, quad_weights=weights)


def _hat_moments(nodes: np.ndarray, N: int) -> np.ndarray:
    """Moments of each hat function against r^(N-1) on a uniform grid."""
    h = nodes[1] - nodes[0]
    a, b = nodes[:-1], nodes[1:]
    pn = nodes**N
    pn1 = nodes ** (N + 1)
    dpn = pn[1:] - pn[:-1]
    dpn1 = pn1[1:] - pn1[:-1]
    # int_a^b (r - a) r^(N-1) dr / h  and  int_a^b (b - r) r^(N-1) dr / h
    rising = (dpn1 / (N + 1) - a * dpn / N) / h
    falling = (b * dpn / N - dpn1 / (N + 1)) / h
    w = np.zeros_like(nodes)
    w[:-1] += falling
    w[1:] += rising
    return w


def cell_flux_weights(grid: RadialGrid) -> np.ndarray:
    """Midpoint density r_{i+1/2}^(N-1) / h per cell, for flux/gradient forms.

    sum_i cell_flux_weights[i] * (s[i+1]-s[i])^2 is the midpoint-rule
    discretization of integral (s')^2 r^(N-1) dr.
    """
    mid = 0.5 * (grid.nodes[:-1] + grid.nodes[1:])
    return mid ** (grid.dimension - 1) / grid.spacing


def integrate_radial(grid: RadialGrid, samples: np.ndarray) -> float:
    """Weighted quadrature of node samples against r^(N-1) dr on [0,1]."""
    samples = np.asarray(samples, dtype=float)
    if samples.shape != grid.nodes.shape:
        raise LengthMismatchError(
            f"expected {grid.nodes.size} samples, got {samples.size}"
        )
    return float(grid.quad_weights @ samples)


def integrate_radial_interior(grid: RadialGrid, interior_samples: np.ndarray) -> float:
    """Quadrature over nodes 1..J only; for integrands singular at r=0.

    The r=0 weight is zero, so this equals integrate_radial on any extension
    of the samples to node 0.
    """
    interior_samples = np.asarray(interior_samples, dtype=float)
    if interior_samples.shape != (grid.node_count,):
        raise LengthMismatchError(
            f"expected {grid.node_count} interior samples, got {interior_samples.size}"
        )
    return float(grid.quad_weights[1:] @ interior_samples)


def derivative_samples(grid: RadialGrid, samples: np.ndarray) -> np.ndarray:
    """Second-order derivative of node samples: central interior, one-sided ends."""
    s = np.asarray(samples, dtype=float)
    if s.shape != grid.nodes.shape:
        raise LengthMismatchError(f"expected {grid.nodes.size} samples, got {s.size}")
    h = grid.spacing
    d = np.empty_like(s)
    d[1:-1] = (s[2:] - s[:-2]) / (2.0 * h)
    d[0] = (-3.0 * s[0] + 4.0 * s[1] - s[2]) / (2.0 * h)
    d[-1] = (3.0 * s[-1] - 4.0 * s[-2] + s[-3]) / (2.0 * h)
    return d


@dataclass(frozen=True)
class ProfilePair:
    """Sampled radial pair (f, g) with the boundary data f(1)=1, g(1)=0.

    ``epsilon`` is the positive coupling of the solve, or the string
    ``"limit"`` for harmonic-map limit profiles. g identically zero encodes a
    non-escaping profile.
    """

    grid: RadialGrid
    f_values: np.ndarray
    g_values: np.ndarray
    epsilon: float | str

    def __post_init__(self):
        f = np.asarray(self.f_values, dtype=float)
        g = np.asarray(self.g_values, dtype=float)
        if f.shape != self.grid.nodes.shape or g.shape != self.grid.nodes.shape:
            raise LengthMismatchError("profile arrays must have one value per node")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(g))):
            raise BoundaryConditionError("profile contains non-finite entries")
        if f[-1] != 1.0 or g[-1] != 0.0:
            raise BoundaryConditionError(
                f"profile must satisfy f(1)=1 and g(1)=0 exactly, got "
                f"f(1)={f[-1]!r}, g(1)={g[-1]!r}"
            )
        if self.epsilon != LIMIT_EPSILON:
            eps = float(self.epsilon)
            if not (eps > 0.0 and np.isfinite(eps)):
                raise ValueError(f"epsilon must be positive and finite, got {eps}")
        object.__setattr__(self, "f_values", f)
        object.__setattr__(self, "g_values", g)
        f.setflags(write=False)
        g.setflags(write=False)

    @property
    def is_limit(self) -> bool:
        return self.epsilon == LIMIT_EPSILON


def write_profile_csv(pair: ProfilePair, path) -> None:
    """Write a profile as CSV rows r,f,g with 17-significant-digit floats."""
    with open(path, "w", newline="\n") as fh:
        fh.write(profile_csv_text(pair))


def profile_csv_text(pair: ProfilePair) -> str:
    buf = io.StringIO()
    buf.write("r,f,g\n")
    for r, f, g in zip(pair.grid.nodes, pair.f_values, pair.g_values):
        buf.write(f"{r:.17g},{f:.17g},{g:.17g}\n")
    return buf.getvalue()


def read_profile_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read r, f, g columns back from a profile CSV."""
    data = np.loadtxt(path, delimiter=",", skiprows=1)
    data = np.atleast_2d(data)
    return data[:, 0], data[:, 1], data[:, 2]
