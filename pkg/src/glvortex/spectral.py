"""Linearized-operator spectrum, the threshold eps_N, and the ball eigenvalue.

The operator around the scalar profile,

    L_eps psi = -psi'' - (N-1)/r psi' - eps^-2 W'(1 - f_eps^2) psi,

acts on radial functions with the natural condition at r=0 (the volume weight
vanishes there) and Dirichlet psi(1)=0. It is discretized in its conservative
Sturm-Liouville form: cell-midpoint fluxes for -(r^(N-1) psi')'/r^(N-1) and
node-lumped potential, which is weighted-symmetric against the r^(N-1) dr
inner product by construction. A diagonal mass scaling phi_i = sqrt(w_i) psi_i
turns the generalized problem into a standard symmetric tridiagonal one;
its smallest eigenvalue is located by Sturm-sequence bisection from the
Gershgorin bracket and the eigenvector by shifted inverse iteration, the
shift sitting at the verified lower bisection endpoint (strictly below the
eigenvalue).

The principal eigenvalue l(eps) is negative below eps_N and positive above
it in dimensions 2..6; find_epsilon_N bisects that sign change inside the
a-priori bracket (0, sqrt(W'(1)/lambda_1)). For N >= 7 the eigenvalue is
bounded below by the positive constant (N-2)^2/4 - (N-1) and no threshold
exists.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_banded

from .errors import (
    BracketError,
    ConvergenceError,
    NoThresholdError,
    SizingError,
)
from .potential import PotentialSpec, eval_potential
from .profiles import SolverOptions, solve_nonescaping_profile
from .radial import ProfilePair, RadialGrid, cell_flux_weights, integrate_radial

EPS_N_DEFAULT_TOL = 1e-6
BRACKET_LOW = 1e-3
MAX_INVERSE_ITERATIONS = 500


def hardy_constant(N: int) -> float:
    """The constant (N-2)^2/4 - (N-1); nonnegative exactly for N >= 7."""
    if int(N) != N or N < 2:
        raise SizingError(f"dimension N must be an integer >= 2, got {N}")
    return (N - 2) ** 2 / 4.0 - (N - 1)


@dataclass(frozen=True)
class SturmLiouvilleSystem:
    """Tridiagonal form of the linearized operator on interior nodes 1..J-1.

    ``stiff_*`` hold the weighted-symmetric stiffness-plus-potential matrix S
    (the operator in psi variables is M^-1 S with the diagonal masses), and
    ``sym_*`` the mass-scaled standard symmetric tridiagonal matrix sharing
    its spectrum. ``node_potential`` is the coefficient of psi in the
    operator at every grid node, boundary nodes included.
    """

    grid: RadialGrid
    node_potential: np.ndarray
    masses: np.ndarray
    stiff_diag: np.ndarray
    stiff_lower: np.ndarray
    stiff_upper: np.ndarray
    sym_diag: np.ndarray
    sym_off: np.ndarray
    left_natural: bool
    epsilon: float | None = None

    def bilinear_form(self, u: np.ndarray, v: np.ndarray) -> float:
        """<A u, v> in the weighted inner product, i.e. u^T S v, edge-grouped."""
        u = np.asarray(u, float)
        v = np.asarray(v, float)
        if u.shape != self.stiff_diag.shape or v.shape != self.stiff_diag.shape:
            raise ValueError("interior-length vectors expected")
        val = np.sum(self.stiff_diag * (u * v))
        val += np.sum(self.stiff_upper * (v[1:] * u[:-1]))
        val += np.sum(self.stiff_lower * (v[:-1] * u[1:]))
        return float(val)

    def symmetry_defect(self, u: np.ndarray, v: np.ndarray) -> float:
        """|<A u, v> - <u, A v>| in the weighted inner product."""
        return abs(self.bilinear_form(u, v) - self.bilinear_form(v, u))

    def apply_operator(self, psi_interior: np.ndarray) -> np.ndarray:
        """A psi = M^-1 S psi on interior nodes."""
        psi = np.asarray(psi_interior, float)
        out = self.stiff_diag * psi
        out[:-1] += self.stiff_upper * psi[1:]
        out[1:] += self.stiff_lower * psi[:-1]
        return out / self.masses

    def weighted_inner(self, u: np.ndarray, v: np.ndarray) -> float:
        return float(np.sum(self.masses * u * v))


@dataclass(frozen=True)
class SpectralResult:
    """Principal eigenpair: eigenvalue and the nodeless radial eigenfunction.

    The eigenfunction lives on all J+1 grid nodes, is normalized to
    integral psi^2 r^(N-1) dr = 1 and sign-fixed with psi(0) > 0.
    """

    eigenvalue: float
    eigenfunction: np.ndarray
    grid: RadialGrid


def _build_system(grid: RadialGrid, node_potential: np.ndarray,
                  left_natural: bool, epsilon: float | None) -> SturmLiouvilleSystem:
    w = grid.quad_weights
    flux = cell_flux_weights(grid)  # c_i couples nodes i and i+1
    # interior nodes 1..J-1; S_ii = c_{i-1} + c_i
    diag = flux[:-1] + flux[1:]
    if left_natural:
        # node 0 is slaved to node 1: cell-0 flux drops from the first row
        diag[0] = flux[1]
    off = -flux[1:-1]
    q = np.asarray(node_potential, float)
    diag = diag + w[1:-1] * q[1:-1]
    masses = w[1:-1].copy()
    sym_diag = diag / masses
    sym_off = off / np.sqrt(masses[:-1] * masses[1:])
    return SturmLiouvilleSystem(
        grid=grid, node_potential=q, masses=masses,
        stiff_diag=diag, stiff_lower=off.copy(), stiff_upper=off.copy(),
        sym_diag=sym_diag, sym_off=sym_off,
        left_natural=left_natural, epsilon=epsilon,
    )


def assemble_linearized(spec: PotentialSpec, profile: ProfilePair,
                        epsilon: float) -> SturmLiouvilleSystem:
    """Assemble the operator linearized at a converged non-escaping profile."""
    if profile.is_limit or float(profile.epsilon) != float(epsilon):
        raise ValueError(
            f"profile was solved at eps={profile.epsilon}, operator requested "
            f"at eps={epsilon}")
    if np.any(profile.g_values != 0.0):
        raise ValueError("linearized operator requires the g=0 profile")
    _, wp, _ = eval_potential(spec, 1.0 - profile.f_values**2)
    q = -np.asarray(wp, float) / epsilon**2
    return _build_system(profile.grid, q, left_natural=True, epsilon=float(epsilon))


def _sturm_count(d: np.ndarray, e: np.ndarray, x: float) -> int:
    """Number of eigenvalues of the symmetric tridiagonal (d, e) below x."""
    count = 0
    q = d[0] - x
    if q < 0.0:
        count += 1
    tiny = 1e-300
    for i in range(1, d.size):
        denom = q if q != 0.0 else tiny
        q = d[i] - x - e[i - 1] * e[i - 1] / denom
        if q < 0.0:
            count += 1
    return count


def _smallest_eigenvalue_bracket(d, e):
    radius = np.zeros_like(d)
    radius[:-1] += np.abs(e)
    radius[1:] += np.abs(e)
    lo = float(np.min(d - radius))
    hi = float(np.max(d + radius))
    scale = max(abs(lo), abs(hi), 1.0)
    tol = 1e-13 * scale
    # keep lo strictly below the spectrum
    if _sturm_count(d, e, lo) != 0:
        lo -= scale
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _sturm_count(d, e, mid) >= 1:
            hi = mid
        else:
            lo = mid
    return lo, hi, scale


def principal_eigenpair(system: SturmLiouvilleSystem) -> SpectralResult:
    """Smallest eigenvalue and its nodeless eigenfunction."""
    d, e = system.sym_diag, system.sym_off
    lo, hi, scale = _smallest_eigenvalue_bracket(d, e)
    # inverse iteration shifted just below the verified lower endpoint
    shift = lo - 1e-10 * scale
    n = d.size
    phi = np.ones(n)
    phi /= np.linalg.norm(phi)
    eig = None
    for it in range(MAX_INVERSE_ITERATIONS):
        ab = np.zeros((3, n))
        ab[0, 1:] = e
        ab[1, :] = d - shift
        ab[2, :-1] = e
        try:
            phi_new = solve_banded((1, 1), ab, phi)
        except np.linalg.LinAlgError:
            shift -= 1e-8 * scale
            continue
        if not np.all(np.isfinite(phi_new)):
            shift -= 1e-8 * scale
            continue
        phi = phi_new / np.linalg.norm(phi_new)
        t_phi = d * phi
        t_phi[:-1] += e * phi[1:]
        t_phi[1:] += e * phi[:-1]
        eig = float(phi @ t_phi)
        if np.max(np.abs(t_phi - eig * phi)) <= 1e-12 * scale:
            break
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {MAX_INVERSE_ITERATIONS} steps",
            iterations=MAX_INVERSE_ITERATIONS)

    psi_int = phi / np.sqrt(system.masses)
    psi = np.zeros(system.grid.nodes.size)
    psi[1:-1] = psi_int
    psi[0] = psi_int[0] if system.left_natural else 0.0
    # principal eigenfunction: fix the sign, then reject interior sign changes
    # (values may underflow to 0 far from a deep well, so not a strict check)
    if psi[1] < 0.0:
        psi = -psi
    if np.any(psi[1:-1] < 0.0) and np.any(psi[1:-1] > 0.0):
        raise ConvergenceError("computed eigenfunction has an interior sign change")
    norm = integrate_radial(system.grid, psi * psi)
    psi = psi / np.sqrt(norm)
    psi.setflags(write=False)
    return SpectralResult(eigenvalue=eig, eigenfunction=psi, grid=system.grid)


def dirichlet_lambda1(N: int, grid: RadialGrid) -> float:
    """Principal Dirichlet eigenvalue of -Laplace on the unit ball B^N."""
    if grid.dimension != N:
        raise SizingError(f"grid was built for N={grid.dimension}, not N={N}")
    q = np.zeros(grid.nodes.size)
    system = _build_system(grid, q, left_natural=True, epsilon=None)
    return principal_eigenpair(system).eigenvalue


def principal_eigenvalue_at(
    spec: PotentialSpec,
    grid: RadialGrid,
    epsilon: float,
    profile: ProfilePair | None = None,
    opts: SolverOptions | None = None,
) -> tuple[float, SpectralResult, ProfilePair]:
    """Convenience: solve the profile at eps, assemble, and return l(eps)."""
    if profile is None:
        profile = solve_nonescaping_profile(spec, grid, epsilon, opts)
    system = assemble_linearized(spec, profile, epsilon)
    result = principal_eigenpair(system)
    return result.eigenvalue, result, profile


def find_epsilon_N(spec: PotentialSpec, N: int, grid: RadialGrid,
                   tol: float = EPS_N_DEFAULT_TOL) -> float:
    """Bisection for the zero crossing of l(eps) in dimensions 2..6.

    The bracket is [1e-3, sqrt(W'(1)/lambda_1)]; its sign conditions are
    checked before bisecting. For N >= 7 no threshold exists: l(eps) is
    bounded below by the positive Hardy constant.
    """
    if int(N) != N or N < 2:
        raise SizingError(f"dimension N must be an integer >= 2, got {N}")
    if N >= 7:
        raise NoThresholdError(
            f"no threshold for N={N}: l(eps) >= (N-2)^2/4-(N-1) = "
            f"{hardy_constant(N)} > 0 for every eps")
    if grid.dimension != N:
        raise SizingError(f"grid was built for N={grid.dimension}, not N={N}")

    lam1 = dirichlet_lambda1(N, grid)
    wp1 = float(eval_potential(spec, 1.0)[1])
    hi = float(np.sqrt(wp1 / lam1))
    lo = BRACKET_LOW

    warm: dict[str, np.ndarray | None] = {"f": None}

    def ell(eps: float) -> float:
        prof = solve_nonescaping_profile(spec, grid, eps, initial=warm["f"])
        warm["f"] = prof.f_values
        system = assemble_linearized(spec, prof, eps)
        return principal_eigenpair(system).eigenvalue

    ell_hi = ell(hi)
    ell_lo = ell(lo)
    if not (ell_lo < 0.0 < ell_hi):
        raise BracketError(
            f"bracket [{lo}, {hi}] does not straddle the sign change: "
            f"l({lo}) = {ell_lo}, l({hi}) = {ell_hi}",
            lo_value=ell_lo, hi_value=ell_hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if ell(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
