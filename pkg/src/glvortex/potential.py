"""The nonlinearity W on (-inf, 1] and validation of the hypotheses on it.

The solvers need W, W' and W'' (Newton linearizations use W''), so potentials
always carry all three. The hypotheses checked by ``validate_potential`` are
W(0)=0, W>0 away from 0, convexity, and strict convexity when claimed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import DomainError

KIND_QUADRATIC = "quadratic_prototype"
KIND_TABULATED = "user_tabulated"

#: upper end of the domain of W.
T_MAX = 1.0


@dataclass(frozen=True)
class PotentialSpec:
    """A potential with derivatives, defined on t <= 1."""

    kind: str
    strictly_convex: bool
    _eval: Callable[[float], tuple[float, float, float]] = field(repr=False)

    def __call__(self, t):
        return eval_potential(self, t)


def eval_potential(spec: PotentialSpec, t: float) -> tuple[float, float, float]:
    """Return (W(t), W'(t), W''(t)); t > 1 is outside the domain of W."""
    if np.any(np.asarray(t) > T_MAX):
        raise DomainError(f"potential is defined on (-inf, 1], got t={t}")
    return spec._eval(t)


def quadratic_prototype() -> PotentialSpec:
    """The prototype W(t) = t^2 / 2."""

    def _eval(t):
        t = np.asarray(t, dtype=float)
        one = np.ones_like(t)
        return 0.5 * t * t, t + 0.0, one

    return PotentialSpec(kind=KIND_QUADRATIC, strictly_convex=True, _eval=_eval)


def potential_from_callables(
    w: Callable, wp: Callable, wpp: Callable, *, strictly_convex: bool,
    kind: str = KIND_TABULATED,
) -> PotentialSpec:
    """Wrap user-supplied W, W', W'' callables (vectorized over t)."""

    def _eval(t):
        t = np.asarray(t, dtype=float)
        return (
            np.asarray(w(t), dtype=float),
            np.asarray(wp(t), dtype=float),
            np.asarray(wpp(t), dtype=float),
        )

    return PotentialSpec(kind=kind, strictly_convex=strictly_convex, _eval=_eval)


def tabulated_potential(
    t: np.ndarray, w: np.ndarray, wp: np.ndarray, *, strictly_convex: bool = False
) -> PotentialSpec:
    """Cubic-Hermite interpolation of (W, W') pairs; W'' differentiates it.

    The table must be strictly increasing in t and should cover [-3, 1] when
    the potential is to be validated over the standard sample range;
    evaluation outside the table extrapolates the end cubics.
    """
    t = np.asarray(t, dtype=float)
    spline = CubicHermiteSpline(t, np.asarray(w, dtype=float), np.asarray(wp, dtype=float))
    d1 = spline.derivative()
    d2 = d1.derivative()

    def _eval(x):
        x = np.asarray(x, dtype=float)
        return spline(x), d1(x), d2(x)

    return PotentialSpec(kind=KIND_TABULATED, strictly_convex=strictly_convex, _eval=_eval)


def load_potential_csv(path, *, strictly_convex: bool = False) -> PotentialSpec:
    """Load a tabulated potential from CSV rows t,W,Wp (with header)."""
    data = np.atleast_2d(np.loadtxt(path, delimiter=",", skiprows=1))
    return tabulated_potential(
        data[:, 0], data[:, 1], data[:, 2], strictly_convex=strictly_convex
    )


@dataclass(frozen=True)
class HypothesisCheck:
    name: str
    passed: bool
    witness: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[HypothesisCheck, ...]

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_potential(spec: PotentialSpec, sample_count: int) -> ValidationReport:
    """Check the potential hypotheses on sample_count points of [-3, 1].

    Failures are reported with the witnessing sample, never raised.
    """
    if sample_count < 100:
        raise ValueError(f"sample_count must be >= 100, got {sample_count}")
    # t=0 must be a sample: zero-at-origin and strictness at 0 are checked there
    ts = np.union1d(np.linspace(-3.0, 1.0, int(sample_count)), [0.0])
    w, _, wpp = eval_potential(spec, ts)
    w0 = float(eval_potential(spec, 0.0)[0])
    checks = [
        HypothesisCheck("zero_at_origin", w0 == 0.0, None if w0 == 0.0 else 0.0,
                        f"W(0) = {w0!r}")
    ]

    nonzero = ts != 0.0
    bad = nonzero & ~(w > 0.0)
    if np.any(bad):
        wit = float(ts[bad][0])
        checks.append(HypothesisCheck("positivity", False, wit,
                                      f"W({wit}) = {float(np.asarray(w)[bad][0])}"))
    else:
        checks.append(HypothesisCheck("positivity", True))

    bad = ~(wpp >= 0.0)
    if np.any(bad):
        wit = float(ts[bad][0])
        checks.append(HypothesisCheck("convexity", False, wit,
                                      f"W''({wit}) = {float(np.asarray(wpp)[bad][0])}"))
    else:
        checks.append(HypothesisCheck("convexity", True))

    if spec.strictly_convex:
        bad = ~(wpp > 0.0)
        if np.any(bad):
            wit = float(ts[bad][0])
            checks.append(HypothesisCheck("strict_convexity", False, wit,
                                          f"W''({wit}) = {float(np.asarray(wpp)[bad][0])}"))
        else:
            checks.append(HypothesisCheck("strict_convexity", True))

    return ValidationReport(checks=tuple(checks))
