"""Brute-force vector-field energy minimization on the cylinder B^2 x (0,1).

This is the cross-check oracle for the radial solvers: a three-component
field on a Cartesian grid masked to the unit disk, times a z-stack of layers,
carrying the full energy

    E(u) = int [ 1/2 |grad u|^2 + W(1 - |u|^2) / (2 eps^2) ] dx dy dz

with the degree-one data u = (x/|x|, 0) on the lateral boundary and natural
(Neumann) behavior on the z-faces. Nothing here shares discretization with
the radial modules: Cartesian stair-step geometry, plain gradient descent
with momentum, no symmetry assumptions. Quadrature is first-order at the
stair-step boundary by design; the oracle's tolerances are percent-level.

The z-face condition needs no ghost layers: face nodes carry half trapezoid
weights and a single z-edge, which reproduces the reflection-ghost stencil
identically in the gradient.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, SizingError
from .potential import PotentialSpec, eval_potential
from .radial import ProfilePair


@dataclass(frozen=True)
class OracleOptions:
    tolerance: float = 1e-6          # max-norm of the volume-scaled gradient
    max_iterations: int = 200000
    momentum: float = 0.93


@dataclass(frozen=True)
class CylinderGrid:
    """Disk-masked Cartesian grid times z-layers, with boundary classification."""

    K: int
    L: int
    x: np.ndarray          # (K+1,) in-plane coordinates, spacing 2/K
    z: np.ndarray          # (L+1,) layer coordinates, spacing 1/L
    inside: np.ndarray     # (K+1, K+1) bool, x^2 + y^2 <= 1
    boundary: np.ndarray   # inside nodes with an outside 4-neighbor
    interior: np.ndarray   # inside and not boundary (the free nodes)
    dirichlet: np.ndarray  # (K+1, K+1, 3) boundary values (x/|x|, 0)
    radius: np.ndarray     # (K+1, K+1) orbit-consistent radius values

    @property
    def spacing(self) -> float:
        return 2.0 / self.K

    @property
    def z_spacing(self) -> float:
        return 1.0 / self.L


def build_cylinder_grid(K: int, L: int) -> CylinderGrid:
    if int(K) != K or K < 32:
        raise SizingError(f"in-plane resolution K must be an integer >= 32, got {K}")
    if int(L) != L or L < 8:
        raise SizingError(f"layer count L must be an integer >= 8, got {L}")
    K, L = int(K), int(L)
    x = -1.0 + 2.0 * np.arange(K + 1) / K
    z = np.arange(L + 1) / L
    X, Y = np.meshgrid(x, x, indexing="ij")
    # orbit-consistent radius: identical float on every dihedral image
    ax, ay = np.abs(X), np.abs(Y)
    radius = np.hypot(np.minimum(ax, ay), np.maximum(ax, ay))
    inside = radius <= 1.0

    padded = np.zeros((K + 3, K + 3), dtype=bool)
    padded[1:-1, 1:-1] = inside
    all_neighbors_inside = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                            & padded[1:-1, :-2] & padded[1:-1, 2:])
    boundary = inside & ~all_neighbors_inside
    interior = inside & all_neighbors_inside

    dirichlet = np.zeros((K + 1, K + 1, 3))
    with np.errstate(invalid="ignore", divide="ignore"):
        dirichlet[..., 0] = np.where(boundary & (radius > 0), X / radius, 0.0)
        dirichlet[..., 1] = np.where(boundary & (radius > 0), Y / radius, 0.0)

    for arr in (x, z, inside, boundary, interior, dirichlet, radius):
        arr.setflags(write=False)
    return CylinderGrid(K=K, L=L, x=x, z=z, inside=inside, boundary=boundary,
                        interior=interior, dirichlet=dirichlet, radius=radius)


@dataclass(frozen=True)
class FieldState:
    """Three-component field on the cylinder grid with its discrete energy."""

    grid: CylinderGrid
    values: np.ndarray     # (K+1, K+1, L+1, 3)
    epsilon: float
    energy: float
    seed: int | None = None

    def __post_init__(self):
        self.values.setflags(write=False)


def _z_weights(grid: CylinderGrid) -> np.ndarray:
    wz = np.full(grid.L + 1, grid.z_spacing)
    wz[0] *= 0.5
    wz[-1] *= 0.5
    return wz


def field_energy(spec: PotentialSpec, grid: CylinderGrid, u: np.ndarray,
                 epsilon: float) -> float:
    """Discrete cylinder energy: edge-based gradients, trapezoid in z."""
    ha = grid.spacing
    hz = grid.z_spacing
    wz = _z_weights(grid)
    inside = grid.inside

    pair_x = inside[:-1, :] & inside[1:, :]
    dx = (u[1:] - u[:-1]) * pair_x[:, :, None, None]
    e = 0.5 * float(np.sum(dx * dx, axis=(0, 1, 3)) @ wz)

    pair_y = inside[:, :-1] & inside[:, 1:]
    dy = (u[:, 1:] - u[:, :-1]) * pair_y[:, :, None, None]
    e += 0.5 * float(np.sum(dy * dy, axis=(0, 1, 3)) @ wz)

    dz = (u[:, :, 1:] - u[:, :, :-1]) * inside[:, :, None, None]
    e += 0.5 * float(np.sum(dz * dz)) * ha * ha / hz

    norm2 = np.sum(u * u, axis=3)
    w = eval_potential(spec, 1.0 - norm2)[0] * inside[:, :, None]
    e += float(np.sum(w, axis=(0, 1)) @ wz) * ha * ha / (2.0 * epsilon**2)
    return e


def field_gradient(spec: PotentialSpec, grid: CylinderGrid, u: np.ndarray,
                   epsilon: float) -> np.ndarray:
    """Gradient of the discrete energy; zero at Dirichlet and outside nodes."""
    ha = grid.spacing
    hz = grid.z_spacing
    wz = _z_weights(grid)
    inside = grid.inside
    g = np.zeros_like(u)

    pair_x = inside[:-1, :] & inside[1:, :]
    dx = (u[1:] - u[:-1]) * (pair_x[:, :, None] * wz[None, None, :])[..., None]
    g[1:] += dx
    g[:-1] -= dx

    pair_y = inside[:, :-1] & inside[:, 1:]
    dy = (u[:, 1:] - u[:, :-1]) * (pair_y[:, :, None] * wz[None, None, :])[..., None]
    g[:, 1:] += dy
    g[:, :-1] -= dy

    cz = ha * ha / hz
    dz = (u[:, :, 1:] - u[:, :, :-1]) * (cz * inside[:, :, None, None])
    g[:, :, 1:] += dz
    g[:, :, :-1] -= dz

    norm2 = np.sum(u * u, axis=3)
    wp = eval_potential(spec, 1.0 - norm2)[1]
    coef = -(ha * ha / epsilon**2) * wp * inside[:, :, None] * wz[None, None, :]
    g += coef[..., None] * u

    g *= grid.interior[:, :, None, None]
    return g


def node_volumes(grid: CylinderGrid) -> np.ndarray:
    """Quadrature volume per node, shape (K+1, K+1, L+1)."""
    wz = _z_weights(grid)
    vol = grid.spacing**2 * wz[None, None, :] * grid.inside[:, :, None]
    return vol


def z_invariant_embed(grid: CylinderGrid, pair: ProfilePair) -> np.ndarray:
    """Field array from a radial pair, constant in z.

    Profile values are interpolated at the orbit-consistent node radius, so
    the embedding is exactly radially equivariant node by node.
    """
    r = grid.radius
    f = np.interp(r, pair.grid.nodes, pair.f_values)
    g = np.interp(r, pair.grid.nodes, pair.g_values)
    u = np.zeros((grid.K + 1, grid.K + 1, 1, 3))
    X, Y = np.meshgrid(grid.x, grid.x, indexing="ij")
    with np.errstate(invalid="ignore", divide="ignore"):
        u[..., 0, 0] = np.where(r > 0, f * X / r, 0.0)
        u[..., 0, 1] = np.where(r > 0, f * Y / r, 0.0)
    u[..., 0, 2] = g
    u = np.repeat(u, grid.L + 1, axis=2)
    u *= grid.inside[:, :, None, None]
    bmask = grid.boundary[:, :, None, None]
    u = np.where(bmask, grid.dirichlet[:, :, None, :], u)
    return u


def random_field(grid: CylinderGrid, seed: int) -> np.ndarray:
    """Small random free values with the Dirichlet data installed."""
    rng = np.random.default_rng(seed)
    u = rng.uniform(-0.5, 0.5, size=(grid.K + 1, grid.K + 1, grid.L + 1, 3))
    u *= grid.interior[:, :, None, None]
    u += grid.dirichlet[:, :, None, :] * grid.boundary[:, :, None, None]
    return u


def minimize_full_energy(
    spec: PotentialSpec,
    grid: CylinderGrid,
    epsilon: float,
    init: np.ndarray,
    opts: OracleOptions | None = None,
    seed: int | None = None,
) -> FieldState:
    """Descend the discrete energy to a stationary point.

    Gradient descent with heavy-ball momentum and an adaptive step; a trial
    step is accepted only if the energy does not increase, so accepted steps
    descend monotonically. Convergence is declared when the volume-scaled
    gradient max-norm falls under the tolerance.
    """
    opts = opts or OracleOptions()
    u = np.array(init, dtype=float)
    vol = node_volumes(grid)
    safe_vol = np.where(vol > 0, vol, 1.0)[..., None]
    ha, hz = grid.spacing, grid.z_spacing
    lam_max = 8.0 / ha**2 + 4.0 / hz**2 + 4.0 / epsilon**2
    alpha = 1.0 / lam_max
    beta = opts.momentum
    energy = field_energy(spec, grid, u, epsilon)
    velocity = np.zeros_like(u)
    for it in range(opts.max_iterations):
        g = field_gradient(spec, grid, u, epsilon)
        residual = float(np.max(np.abs(g / safe_vol)))
        if residual < opts.tolerance:
            return FieldState(grid=grid, values=u, epsilon=float(epsilon),
                              energy=energy, seed=seed)
        velocity = beta * velocity - alpha * g
        trial = u + velocity
        e_trial = field_energy(spec, grid, trial, epsilon)
        if np.isfinite(e_trial) and e_trial <= energy:
            u = trial
            energy = e_trial
            alpha = min(alpha * 1.02, 4.0 / lam_max)
        else:
            velocity[:] = 0.0
            alpha *= 0.5
            if alpha < 1e-18:
                raise ConvergenceError(
                    "oracle step size underflow; descent cannot proceed",
                    iterations=it, residual=residual)
    raise ConvergenceError(
        f"oracle did not reach tolerance {opts.tolerance} in "
        f"{opts.max_iterations} iterations",
        iterations=opts.max_iterations, residual=residual)


def z_average(state: FieldState) -> np.ndarray:
    wz = _z_weights(state.grid)
    return np.einsum("xyzm,z->xym", state.values, wz) / float(wz.sum())


def z_invariance_deviation(state: FieldState) -> float:
    """Max node deviation |u(x,z) - mean_z u(x,.)| over inside nodes."""
    mean = z_average(state)
    diff = state.values - mean[:, :, None, :]
    dev = np.sqrt(np.sum(diff * diff, axis=3)) * state.grid.inside[:, :, None]
    return float(np.max(dev))


def radial_symmetry_deviation(state: FieldState) -> float:
    """Departure of the z-averaged field from radial equivariance.

    Nodes are grouped into exact-radius orbits (all dihedral images of a
    lattice point share one radius float); within each orbit the spread of
    (|u_planar|, u_3) plus the worst angular-alignment defect
    |u_planar - |u_planar| x/|x|| is taken, and the max over orbits returned.
    """
    grid = state.grid
    mean = z_average(state)
    X, Y = np.meshgrid(grid.x, grid.x, indexing="ij")
    inside = grid.inside
    r = grid.radius
    planar = np.hypot(mean[..., 0], mean[..., 1])
    with np.errstate(invalid="ignore", divide="ignore"):
        ex = np.where(r > 0, X / r, 0.0)
        ey = np.where(r > 0, Y / r, 0.0)
    defect = np.hypot(mean[..., 0] - planar * ex, mean[..., 1] - planar * ey)

    radii = r[inside]
    mags = planar[inside]
    thirds = mean[..., 2][inside]
    defects = defect[inside]
    order = np.argsort(radii, kind="stable")
    radii, mags, thirds, defects = (a[order] for a in (radii, mags, thirds, defects))
    boundaries = np.flatnonzero(np.diff(radii)) + 1
    worst = 0.0
    for chunk in np.split(np.arange(radii.size), boundaries):
        spread = max(float(mags[chunk].max() - mags[chunk].min()),
                     float(thirds[chunk].max() - thirds[chunk].min()))
        worst = max(worst, spread + float(defects[chunk].max()))
    return worst


def reflect_third_component(state: FieldState) -> FieldState:
    u = state.values.copy()
    u[..., 2] = -u[..., 2]
    return FieldState(grid=state.grid, values=u, epsilon=state.epsilon,
                      energy=state.energy, seed=state.seed)


def rotation_energy_invariance(spec: PotentialSpec, state: FieldState,
                               angle: float = np.pi) -> float:
    """|E(u) - E(R u)| for the orthogonal map R fixing the plane R^2 x {0}.

    For three components the stabilizer of the planar subspace is {+1, -1}
    on the third axis; the angle selects the element (odd multiples of pi
    give the reflection, even ones the identity).
    """
    e0 = field_energy(spec, state.grid, state.values, state.epsilon)
    if int(round(angle / np.pi)) % 2 == 0:
        other = state.values
    else:
        other = state.values.copy()
        other[..., 2] = -other[..., 2]
    e1 = field_energy(spec, state.grid, other, state.epsilon)
    return abs(e0 - e1)


def write_field(state: FieldState, path) -> None:
    """Raw dump: magic GLF1, int32 K, L, M, then float64 node values.

    Ordering: z outermost, then y, then x fastest, with the three components
    contiguous per node; all little-endian. Outside-disk nodes hold NaN.
    """
    grid = state.grid
    u = state.values.copy()
    u[~grid.inside] = np.nan
    data = np.ascontiguousarray(np.transpose(u, (2, 1, 0, 3)), dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC)
        fh.write(struct.pack("<iii", grid.K, grid.L, 3))
        data.tofile(fh)


def read_field(path) -> tuple[int, int, int, np.ndarray]:
    """Read a raw field dump back; returns (K, L, M, values[x, y, z, m])."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FIELD_MAGIC:
            raise ValueError(f"not a field dump (magic {magic!r})")
        K, L, M = struct.unpack("<iii", fh.read(12))
        data = np.fromfile(fh, dtype="<f8")
    values = data.reshape(L + 1, K + 1, K + 1, M).transpose(2, 1, 0, 3)
    return K, L, M, values
