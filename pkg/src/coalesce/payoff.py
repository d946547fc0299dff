"""Cost-of-change and profit-of-coalescence functions.

A stage game between two groups at distance ``xi`` is fully determined by a
profit function ``g`` and a cost function ``f``.  Both map nonnegative
distances to nonnegative utilities, vanish at zero and increase strictly.
Cooperation only makes sense when ``f < g``; otherwise the stage game is a
prisoner's dilemma and nobody ever merges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_GRID_POINTS = 1024


class PayoffError(ValueError):
    """Invalid payoff definition."""


class PayoffDomainError(PayoffError):
    """Negative distance passed to a payoff function."""


class PayoffRangeError(PayoffError):
    """Distance outside the range a tabulated spec is certified on."""


@dataclass(frozen=True)
class _Power:
    scale: float
    exponent: float

    def __call__(self, xi: float) -> float:
        return self.scale * xi**self.exponent


@dataclass(frozen=True)
class _Poly:
    coeffs: tuple[float, ...]

    def __call__(self, xi: float) -> float:
        acc = 0.0
        for a in reversed(self.coeffs):
            acc = acc * xi + a
        return acc


@dataclass(frozen=True)
class _Interp:
    x: tuple[float, ...]
    y: tuple[float, ...]

    def __call__(self, xi: float) -> float:
        return float(np.interp(xi, self.x, self.y))


@dataclass(frozen=True)
class PayoffSpec:
    """General ``(f, g)`` pair, certified on ``operating_range``.

    ``operating_range`` defaults to all of ``[0, inf)``.  Specs whose
    functions only make sense on a bounded interval (tables, fitted curves)
    should pass the interval explicitly; evaluation outside it raises
    :class:`PayoffRangeError`.
    """

    profit: Callable[[float], float]
    cost: Callable[[float], float]
    operating_range: tuple[float, float] = (0.0, math.inf)
    name: str = "general"

    def __post_init__(self):
        lo, hi = self.operating_range
        if not (0.0 <= lo < hi):
            raise PayoffError(f"bad operating range {self.operating_range}")

    def _check(self, xi: float) -> None:
        if xi < 0 or math.isnan(xi):
            raise PayoffDomainError(f"distance must be nonnegative, got {xi}")
        lo, hi = self.operating_range
        # zero is always admissible since f(0) = g(0) = 0 by definition
        if xi != 0.0 and not (lo <= xi <= hi):
            raise PayoffRangeError(f"xi={xi} outside certified range [{lo}, {hi}]")

    def g(self, xi: float) -> float:
        self._check(xi)
        return 0.0 if xi == 0.0 else float(self.profit(xi))

    def f(self, xi: float) -> float:
        self._check(xi)
        return 0.0 if xi == 0.0 else float(self.cost(xi))

    @property
    def is_power_law(self) -> bool:
        return False


@dataclass(frozen=True)
class PowerLawSpec(PayoffSpec):
    """``g(xi) = theta * xi**lam`` and ``f = c * g``.

    Under this family the equilibrium merge probability does not depend on
    the distance, which is what makes the coalescence time negative binomial.
    """

    profit: Callable[[float], float] = field(init=False, repr=False)
    cost: Callable[[float], float] = field(init=False, repr=False)
    theta: float = 1.0
    lam: float = 1.0
    c: float = 0.5
    name: str = "power_law"

    def __post_init__(self):
        if not self.theta > 0:
            raise PayoffError(f"theta must be positive, got {self.theta}")
        if not self.lam > 0:
            raise PayoffError(f"lambda must be positive, got {self.lam}")
        if not 0 < self.c < 1:
            raise PayoffError(f"c must lie in (0, 1), got {self.c}")
        theta, lam, c = self.theta, self.lam, self.c
        object.__setattr__(self, "profit", _Power(theta, lam))
        object.__setattr__(self, "cost", _Power(c * theta, lam))
        super().__post_init__()

    @property
    def is_power_law(self) -> bool:
        return True


def polynomial_spec(
    profit_coeffs: Sequence[float],
    cost_coeffs: Sequence[float],
    operating_range: tuple[float, float] = (0.0, math.inf),
) -> PayoffSpec:
    """Spec with polynomial ``g`` and ``f``; coefficients in increasing power.

    ``polynomial_spec([0, 1, 1], [0, 0.5])`` is ``g = xi + xi**2``,
    ``f = 0.5 * xi``.
    """
    pc = [float(a) for a in profit_coeffs]
    cc = [float(a) for a in cost_coeffs]
    if not pc or not cc:
        raise PayoffError("empty coefficient list")
    if pc[0] != 0 or cc[0] != 0:
        raise PayoffError("constant terms must be zero so that f(0) = g(0) = 0")

    return PayoffSpec(
        _Poly(tuple(pc)), _Poly(tuple(cc)), operating_range, name="polynomial"
    )


def tabulated_spec(
    xi: Sequence[float], profit: Sequence[float], cost: Sequence[float]
) -> PayoffSpec:
    """Piecewise-linear spec through tabulated points.

    The table must start at ``xi = 0``; it is certified on
    ``[xi[0], xi[-1]]`` only.
    """
    x = np.asarray(xi, dtype=float)
    gp = np.asarray(profit, dtype=float)
    fp = np.asarray(cost, dtype=float)
    if x.ndim != 1 or len(x) < 2 or gp.shape != x.shape or fp.shape != x.shape:
        raise PayoffError("table columns must be 1-d and of equal length >= 2")
    if np.any(np.diff(x) <= 0):
        raise PayoffError("table distances must be strictly increasing")
    if x[0] != 0.0:
        raise PayoffError("table must start at xi = 0")
    xs = tuple(x.tolist())
    return PayoffSpec(
        _Interp(xs, tuple(gp.tolist())),
        _Interp(xs, tuple(fp.tolist())),
        (0.0, float(x[-1])),
        name="tabulated",
    )


def eval_profit(spec: PayoffSpec, xi: float) -> float:
    return spec.g(xi)


def eval_cost(spec: PayoffSpec, xi: float) -> float:
    return spec.f(xi)


@dataclass
class ValidationReport:
    zero_ok: bool
    monotone_ok: bool
    dominance_ok: bool
    first_violation: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.zero_ok and self.monotone_ok and self.dominance_ok

    def __bool__(self) -> bool:
        return self.passed


def validate_spec(
    spec: PayoffSpec,
    grid_points: int = DEFAULT_GRID_POINTS,
    xi_range: Optional[tuple[float, float]] = None,
) -> ValidationReport:
    """Check ``f(0)=g(0)=0``, strict monotonicity and ``f < g`` on a grid.

    ``xi_range`` defaults to the spec's operating range; an unbounded range
    must be narrowed by the caller.  Failures are reported, not raised.
    """
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    lo, hi = xi_range if xi_range is not None else spec.operating_range
    if not math.isfinite(hi):
        raise ValueError("validation needs a bounded range; pass xi_range")
    grid = np.linspace(lo, hi, grid_points)
    gv = np.array([spec.g(x) for x in grid])
    fv = np.array([spec.f(x) for x in grid])

    violations = {}
    # the public accessors pin zero by definition; test the raw callables
    zero_ok = abs(spec.profit(0.0)) <= 1e-12 and abs(spec.cost(0.0)) <= 1e-12
    if not zero_ok:
        violations["zero"] = 0.0

    bad = np.flatnonzero((np.diff(gv) <= 0) | (np.diff(fv) <= 0))
    monotone_ok = bad.size == 0
    if not monotone_ok:
        violations["monotone"] = float(grid[bad[0] + 1])

    pos = grid > 0
    bad = np.flatnonzero(pos & ~(fv < gv))
    dominance_ok = bad.size == 0
    if not dominance_ok:
        violations["dominance"] = float(grid[bad[0]])

    return ValidationReport(zero_ok, monotone_ok, dominance_ok, violations)
