"""Closed-form results for the coalescence time and empirical comparison.

For general payoffs only an envelope on the law of ``K*`` is available,
driven by the extreme values of the defection kernel
``h(xi) = f(xi/2) / (g(xi) - f(xi) + f(xi/2))`` over the initial distance
range.  For power-law payoffs the kernel is constant and ``K*`` is exactly
negative binomial: the time of the ``(n-1)``-th success in i.i.d.
Bernoulli(``p_hat``) trials.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import special, stats

from .game import defection_prob
from .payoff import PayoffError, PayoffSpec

DEFAULT_KERNEL_GRID = 4096
GOLDEN_TOL = 1e-10
TAIL_EPS = 1e-10

_INV_PHI = (math.sqrt(5) - 1) / 2


# ---------------------------------------------------------------- distances


def xi_range(initial_states: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Smallest and largest pairwise Euclidean distance."""
    pts = np.asarray(initial_states, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if len(pts) < 2:
        raise ValueError("need at least two states")
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    iu = np.triu_indices(len(pts), k=1)
    d = dist[iu]
    return float(d.min()), float(d.max())


# ---------------------------------------------------------------- kernel bounds


@dataclass(frozen=True)
class ProbBounds:
    xi_min: float
    xi_max: float
    nu: float
    mu: float

    @property
    def p_low(self) -> float:
        return 1.0 - self.mu**2

    @property
    def p_up(self) -> float:
        return 1.0 - self.nu**2

    @classmethod
    def constant(cls, p_hat: float, xi_min: float = 1.0, xi_max: float = 1.0):
        """Bounds for a kernel constant over the range, p_low = p_up = p_hat."""
        h = math.sqrt(1.0 - p_hat)
        return cls(xi_min, xi_max, h, h)


def golden_section_min(func, a: float, b: float, tol: float = GOLDEN_TOL):
    """Minimise a unimodal ``func`` on ``[a, b]``; returns ``(x, func(x))``."""
    a, b = min(a, b), max(a, b)
    c = b - _INV_PHI * (b - a)
    d = a + _INV_PHI * (b - a)
    fc, fd = func(c), func(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - _INV_PHI * (b - a)
            fc = func(c)
        else:
            a, c, fc = c, d, fd
            d = a + _INV_PHI * (b - a)
            fd = func(d)
    x = 0.5 * (a + b)
    return x, func(x)


def kernel_bounds(
    spec: PayoffSpec,
    xi_min: float,
    xi_max: float,
    grid_points: int = DEFAULT_KERNEL_GRID,
) -> ProbBounds:
    """Extremes ``nu <= h <= mu`` of the defection kernel on ``[xi_min, xi_max]``.

    Dense grid scan, then golden-section refinement in the two grid cells
    around each extremum.
    """
    if not 0 < xi_min <= xi_max:
        raise ValueError(f"need 0 < xi_min <= xi_max, got {xi_min}, {xi_max}")
    if spec.is_power_law:
        lam, c = spec.lam, spec.c
        h = c / (2.0**lam * (1.0 - c) + c)
        return ProbBounds(xi_min, xi_max, h, h)

    def h(x):
        try:
            return defection_prob(spec, x)
        except PayoffError as exc:
            raise PayoffError(f"defection kernel leaves (0, 1): {exc}") from None

    if xi_min == xi_max:
        v = h(xi_min)
        return ProbBounds(xi_min, xi_max, v, v)

    grid = np.linspace(xi_min, xi_max, grid_points)
    vals = np.array([h(x) for x in grid])
    if np.any(vals <= 0) or np.any(vals >= 1):
        raise PayoffError("defection kernel leaves (0, 1) on the grid")

    def refine(idx, sign):
        lo = grid[max(idx - 1, 0)]
        hi = grid[min(idx + 1, len(grid) - 1)]
        x, v = golden_section_min(lambda t: sign * h(t), lo, hi)
        return sign * v

    i_min, i_max = int(np.argmin(vals)), int(np.argmax(vals))
    nu = min(vals[i_min], refine(i_min, 1.0))
    mu = max(vals[i_max], refine(i_max, -1.0))
    return ProbBounds(xi_min, xi_max, float(nu), float(mu))


# ---------------------------------------------------------------- theory


def _log_binom(a: int, b: int) -> float:
    return math.lgamma(a + 1) - math.lgamma(b + 1) - math.lgamma(a - b + 1)


def _term(base: float, power: int) -> float:
    if power == 0:
        return 0.0
    if base <= 0.0:
        return -math.inf
    return power * math.log(base)


def _envelope(n, T, fail, succ):
    logv = _log_binom(T - 1, n - 2)
    logv += _term(fail, T + 1 - n) + _term(succ, n - 1)
    return math.exp(logv)


def pmf_bounds(n: int, T: int, bounds: ProbBounds) -> tuple[float, float]:
    """Lower and upper envelope on ``P(K* = T)`` for general payoffs."""
    if n < 2:
        raise ValueError("n must be >= 2")
    if T < n - 1:
        return 0.0, 0.0
    lower = _envelope(n, T, 1.0 - bounds.p_up, bounds.p_low)
    upper = _envelope(n, T, 1.0 - bounds.p_low, bounds.p_up)
    return lower, upper


def expectation_bounds(n: int, bounds: ProbBounds) -> tuple[float, float]:
    if n < 2:
        raise ValueError("n must be >= 2")
    lo, up = bounds.p_low, bounds.p_up
    return (n - 1) * lo ** (n - 1) / up**n, (n - 1) * up ** (n - 1) / lo**n


def p_hat(lam: float, c: float) -> float:
    """Per-step merge probability under power-law payoffs (scale free)."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    h = c / (2.0**lam * (1.0 - c) + c)
    return 1.0 - h * h


@dataclass(frozen=True)
class TheoreticalDist:
    """Negative binomial law of ``K*`` on ``T = n-1, n, ...``."""

    n: int
    p_hat: float

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be >= 2")
        if not 0 < self.p_hat < 1:
            raise ValueError("p_hat must lie in (0, 1)")

    @property
    def q_hat(self) -> float:
        return 1.0 - self.p_hat

    @property
    def first(self) -> int:
        return self.n - 1

    def logpmf(self, T: int) -> float:
        r = self.n - 1
        if T < r:
            return -math.inf
        return (
            _log_binom(T - 1, r - 1)
            + r * math.log(self.p_hat)
            + (T - r) * math.log(self.q_hat)
        )

    def pmf(self, T: int) -> float:
        return math.exp(self.logpmf(T))

    def cdf(self, T: int) -> float:
        # K* <= T  iff  at least n-1 successes among the first T trials
        if T < self.first:
            return 0.0
        return float(special.betainc(self.first, T - self.first + 1, self.p_hat))

    def sf(self, T: int) -> float:
        """``P(K* > T)``, computed directly to keep tail precision."""
        if T < self.first:
            return 1.0
        return float(special.betainc(T - self.first + 1, self.first, self.q_hat))

    def mean(self) -> float:
        return (self.n - 1) / self.p_hat

    def variance(self) -> float:
        return (self.n - 1) * self.q_hat / self.p_hat**2

    def quantile_cutoff(self, eps: float = TAIL_EPS) -> int:
        """Smallest ``T`` with ``P(K* > T) <= eps``."""
        T = self.first
        step = max(1, int(math.sqrt(self.variance())))
        while self.sf(T) > eps:
            T += step
        while T > self.first and self.sf(T - 1) <= eps:
            T -= 1
        return T

    def support(self, eps: float = TAIL_EPS) -> range:
        return range(self.first, self.quantile_cutoff(eps) + 1)


def negbinom(n: int, p: float) -> TheoreticalDist:
    return TheoreticalDist(n, p)


# ---------------------------------------------------------------- monotonicity


@dataclass
class MonotonicityReport:
    c_grid: list[float]
    p_hats: list[float]
    means: list[float]
    first_violation: Optional[int] = None

    @property
    def passed(self) -> bool:
        return self.first_violation is None


def monotonicity_scan(lam: float, c_grid: Sequence[float], n: int = 20) -> MonotonicityReport:
    """Check p_hat falls and the expected coalescence time rises along ``c_grid``."""
    cs = [float(c) for c in c_grid]
    if any(b <= a for a, b in zip(cs, cs[1:])):
        raise ValueError("c grid must be strictly increasing")
    ps = [p_hat(lam, c) for c in cs]
    means = [(n - 1) / p for p in ps]
    report = MonotonicityReport(cs, ps, means)
    for i in range(1, len(cs)):
        if not (ps[i] < ps[i - 1] and means[i] > means[i - 1]):
            report.first_violation = i
            break
    return report


# ---------------------------------------------------------------- empirical


@dataclass
class EmpiricalDist:
    counts: Counter = field(default_factory=Counter)

    @classmethod
    def from_samples(cls, samples: Iterable[int]) -> "EmpiricalDist":
        return cls(Counter(int(s) for s in samples))

    @property
    def trials(self) -> int:
        return sum(self.counts.values())

    def __add__(self, other: "EmpiricalDist") -> "EmpiricalDist":
        return EmpiricalDist(self.counts + other.counts)

    def freq(self, T: int) -> float:
        return self.counts.get(T, 0) / self.trials

    def as_array(self) -> np.ndarray:
        return np.repeat(
            np.fromiter(self.counts.keys(), dtype=float),
            np.fromiter(self.counts.values(), dtype=int),
        )

    def mean(self) -> float:
        N = self.trials
        return sum(t * k for t, k in self.counts.items()) / N

    def variance(self) -> float:
        """Unbiased sample variance."""
        N = self.trials
        if N < 2:
            return 0.0
        m = self.mean()
        return sum(k * (t - m) ** 2 for t, k in self.counts.items()) / (N - 1)

    def mean_se(self) -> float:
        return math.sqrt(self.variance() / self.trials)

    def variance_se(self) -> float:
        """Large-sample standard error of the sample variance."""
        N = self.trials
        if N < 4:
            return math.inf
        m = self.mean()
        m4 = sum(k * (t - m) ** 4 for t, k in self.counts.items()) / N
        s2 = self.variance()
        return math.sqrt(max(m4 - s2 * s2 * (N - 3) / (N - 1), 0.0) / N)


@dataclass
class FitReport:
    tv_distance: float
    chi_square: float
    dof: int
    chi_square_pvalue: float
    empirical_mean: float
    empirical_var: float
    empirical_mean_se: float
    theory_mean: float
    theory_var: float
    mean_z: float
    trials: int
    support_mismatch: bool

    def to_json_dict(self) -> dict:
        def clean(v):
            if isinstance(v, float) and not math.isfinite(v):
                return None
            return v

        return {k: clean(v) for k, v in self.__dict__.items()}


def chi_square_bins(
    empirical: EmpiricalDist, theory: TheoreticalDist, min_expected: float = 5.0
) -> tuple[np.ndarray, np.ndarray]:
    """Observed and expected counts over bins with expected count >= ``min_expected``.

    Bins are built left to right; the open right tail ``T >= t`` is the last
    bin and is folded into its neighbour when too light.
    """
    N = empirical.trials
    obs, exp = [], []
    acc_o = acc_e = 0.0
    T = theory.first
    last = max(max(empirical.counts), theory.first)
    while True:
        # stop once everything left fits in a tail bin
        tail_e = N * theory.sf(T - 1)
        if T > last and tail_e < 2 * min_expected:
            break
        acc_o += empirical.counts.get(T, 0)
        acc_e += N * theory.pmf(T)
        if acc_e >= min_expected:
            obs.append(acc_o)
            exp.append(acc_e)
            acc_o = acc_e = 0.0
        T += 1
    tail_o = acc_o + sum(k for t, k in empirical.counts.items() if t >= T)
    tail_e = acc_e + N * theory.sf(T - 1)
    if tail_e >= min_expected or not exp:
        obs.append(tail_o)
        exp.append(tail_e)
    else:
        obs[-1] += tail_o
        exp[-1] += tail_e
    return np.array(obs), np.array(exp)


def total_variation(empirical: EmpiricalDist, theory: TheoreticalDist) -> float:
    N = empirical.trials
    hi = max(max(empirical.counts), theory.quantile_cutoff())
    tv = sum(c for t, c in empirical.counts.items() if t < theory.first) / N
    for T in range(theory.first, hi + 1):
        tv += abs(empirical.counts.get(T, 0) / N - theory.pmf(T))
    tv += theory.sf(hi)
    return 0.5 * tv


def compare(empirical: EmpiricalDist, theory: TheoreticalDist) -> FitReport:
    N = empirical.trials
    if N < 1:
        raise ValueError("empty empirical distribution")
    mismatch = min(empirical.counts) < theory.first
    if mismatch:
        chi2, dof, pval = math.inf, 0, 0.0
    else:
        obs, exp = chi_square_bins(empirical, theory)
        chi2 = float(np.sum((obs - exp) ** 2 / exp))
        dof = len(obs) - 1
        pval = float(stats.chi2.sf(chi2, dof)) if dof > 0 else 1.0
    mean = empirical.mean()
    return FitReport(
        tv_distance=total_variation(empirical, theory),
        chi_square=chi2,
        dof=dof,
        chi_square_pvalue=pval,
        empirical_mean=mean,
        empirical_var=empirical.variance(),
        empirical_mean_se=empirical.mean_se(),
        theory_mean=theory.mean(),
        theory_var=theory.variance(),
        mean_z=(mean - theory.mean()) / math.sqrt(theory.variance() / N),
        trials=N,
        support_mismatch=mismatch,
    )


# ---------------------------------------------------------------- envelope check


@dataclass
class EnvelopeRow:
    T: int
    empirical_freq: float
    lower: float
    upper: float
    sigma: float
    checked: bool

    @property
    def inside(self) -> bool:
        return self.lower - 3 * self.sigma <= self.empirical_freq <= self.upper + 3 * self.sigma


def envelope_check(
    empirical: EmpiricalDist,
    n: int,
    bounds: ProbBounds,
    min_expected: float = 5.0,
) -> list[EnvelopeRow]:
    """Compare empirical frequencies with the pmf envelope, 3-sigma widened.

    A time ``T`` is checked when the upper envelope predicts at least
    ``min_expected`` occurrences; sigma is the binomial sampling error of
    the empirical frequency.
    """
    N = empirical.trials
    rows = []
    hi = max(empirical.counts)
    for T in range(n - 1, hi + 1):
        lo, up = pmf_bounds(n, T, bounds)
        fr = empirical.freq(T)
        ref = min(max(fr, lo), up)
        sigma = math.sqrt(max(ref * (1 - ref), fr * (1 - fr)) / N)
        rows.append(EnvelopeRow(T, fr, lo, up, sigma, N * up >= min_expected))
    return rows


def pmf_table(
    n: int,
    T_values: Iterable[int],
    theory: Optional[TheoreticalDist] = None,
    bounds: Optional[ProbBounds] = None,
    empirical: Optional[EmpiricalDist] = None,
) -> list[dict]:
    """Rows of the distribution report; absent columns are left as ``None``."""
    rows = []
    for T in T_values:
        lo = up = None
        if bounds is not None:
            lo, up = pmf_bounds(n, T, bounds)
        rows.append(
            {
                "T": T,
                "empirical_freq": empirical.freq(T) if empirical is not None else None,
                "theory_pmf": theory.pmf(T) if theory is not None else None,
                "bound_lower": lo,
                "bound_upper": up,
            }
        )
    return rows

