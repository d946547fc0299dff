import math
from collections import Counter
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from coalesce.analysis import (
    EmpiricalDist,
    ProbBounds,
    compare,
    envelope_check,
    expectation_bounds,
    golden_section_min,
    kernel_bounds,
    monotonicity_scan,
    negbinom,
    p_hat,
    pmf_bounds,
    pmf_table,
    total_variation,
    xi_range,
)
from coalesce.game import defection_prob
from coalesce.payoff import PayoffError, PayoffSpec, PowerLawSpec, polynomial_spec

from oracles import (
    brute_kernel_extremes,
    brute_xi_range,
    enumerate_pmf,
    power_p_hat_exact,
    sample_negbinom_k,
)

POLY = polynomial_spec([0, 1, 1], [0, 0.5])


# ---------------------------------------------------------------- xi_range


def test_xi_range_examples():
    assert xi_range([(0, 0), (3, 4), (0, 1)]) == (1.0, 5.0)
    assert xi_range([(0,), (2,)]) == (2.0, 2.0)
    assert xi_range([(0, 0), (0, 0), (1, 1)])[0] == 0.0


def test_xi_range_too_few():
    with pytest.raises(ValueError):
        xi_range([(0, 0)])


@settings(max_examples=100)
@given(
    st.integers(1, 4).flatmap(
        lambda m: st.lists(
            st.tuples(*[st.floats(-50, 50)] * m), min_size=2, max_size=12
        )
    )
)
def test_xi_range_matches_brute_force(states):
    lo, hi = xi_range(states)
    b_lo, b_hi = brute_xi_range(states)
    assert lo == pytest.approx(b_lo, abs=1e-9)
    assert hi == pytest.approx(b_hi, abs=1e-9)


# ---------------------------------------------------------------- kernel bounds


def test_kernel_bounds_power_law_constant():
    b = kernel_bounds(PowerLawSpec(theta=0.8, lam=1, c=0.75), 0.5, 12.0)
    assert b.nu == b.mu == pytest.approx(0.6, abs=1e-15)
    assert b.p_low == b.p_up == pytest.approx(0.64, abs=1e-15)


def test_kernel_bounds_polynomial_examples():
    # h(xi) = 0.25 / (0.75 + xi), decreasing
    b = kernel_bounds(POLY, 1.0, 9.0)
    assert b.mu == pytest.approx(0.25 / 1.75, abs=1e-12)
    assert b.nu == pytest.approx(0.25 / 9.75, abs=1e-12)
    assert b.p_low <= b.p_up


def test_kernel_bounds_against_dense_scan():
    g = lambda x: x + x**2
    f = lambda x: 0.5 * x
    lo, hi = 0.3, 14.0
    b_nu, b_mu = brute_kernel_extremes(g, f, lo, hi)
    b = kernel_bounds(POLY, lo, hi)
    assert abs(b.nu - b_nu) <= 1e-6 and abs(b.mu - b_mu) <= 1e-6


def test_kernel_bounds_interior_extremum():
    # f(xi/2)/g has an interior bump, so the max is not at an endpoint
    spec = PayoffSpec(
        lambda x: 2 * x, lambda x: x * (1 + 0.5 * math.sin(x)) / 2, (0.0, math.inf)
    )
    b = kernel_bounds(spec, 0.5, 12.0)
    xs = np.linspace(0.5, 12.0, 200001)
    h = np.array([defection_prob(spec, x) for x in xs[::50]])
    assert b.mu >= h.max() - 1e-12 and b.nu <= h.min() + 1e-12
    assert 0.5 < float(xs[::50][h.argmax()]) < 12.0


def test_kernel_bounds_contain_random_points():
    b = kernel_bounds(POLY, 0.2, 30.0)
    rng = np.random.default_rng(12)
    xs = rng.uniform(0.2, 30.0, 100_000)
    h = 0.25 / (0.75 + xs)
    assert np.all(b.nu <= h) and np.all(h <= b.mu)


def test_kernel_bounds_errors():
    with pytest.raises(ValueError):
        kernel_bounds(POLY, 2.0, 1.0)
    with pytest.raises(ValueError):
        kernel_bounds(POLY, 0.0, 1.0)
    bad = PayoffSpec(lambda x: x, lambda x: 2 * x)
    with pytest.raises(PayoffError):
        kernel_bounds(bad, 1.0, 2.0)


def test_golden_section():
    x, v = golden_section_min(lambda t: (t - 1.3) ** 2, 0, 4)
    assert x == pytest.approx(1.3, abs=1e-9)
    assert v == pytest.approx(0.0, abs=1e-15)


# ---------------------------------------------------------------- pmf and envelope


def test_pmf_bounds_collapse_examples():
    b = ProbBounds.constant(0.64)
    lo, up = pmf_bounds(20, 19, b)
    assert lo == pytest.approx(0.00020769187434139318, rel=1e-12)
    assert up == pytest.approx(lo, rel=1e-12)
    assert pmf_bounds(20, 10, b) == (0.0, 0.0)


def test_pmf_bounds_n2_geometric():
    b = ProbBounds.constant(0.64)
    for T in range(1, 30):
        lo, up = pmf_bounds(2, T, b)
        assert lo == pytest.approx(0.36 ** (T - 1) * 0.64, rel=1e-12)


def test_pmf_bounds_ordered():
    b = ProbBounds(1.0, 2.0, 0.2, 0.5)
    for T in range(4, 60):
        lo, up = pmf_bounds(5, T, b)
        assert 0 <= lo <= up


def test_expectation_bounds():
    b = ProbBounds(1.0, 2.0, math.sqrt(0.2), math.sqrt(0.5))  # p_low = 0.5, p_up = 0.8
    lo, up = expectation_bounds(2, b)
    assert lo == pytest.approx(25 / 32, rel=1e-12)
    assert up == pytest.approx(16 / 5, rel=1e-12)
    lo, up = expectation_bounds(20, ProbBounds.constant(0.64))
    assert lo == pytest.approx(up) == pytest.approx(19 / 0.64)


@settings(max_examples=50, deadline=None)
@given(n=st.integers(2, 40), p=st.floats(0.05, 0.99))
def test_envelope_collapse_property(n, p):
    d = negbinom(n, p)
    b = ProbBounds.constant(p)
    for T in range(n - 1, d.quantile_cutoff(1e-8) + 1):
        lo, up = pmf_bounds(n, T, b)
        pm = d.pmf(T)
        assert abs(lo - pm) <= 1e-12 and abs(up - pm) <= 1e-12


# ---------------------------------------------------------------- negative binomial


def test_negbinom_moments_examples():
    d = negbinom(20, 0.64)
    assert d.mean() == pytest.approx(29.6875, abs=1e-12)
    assert d.variance() == pytest.approx(4275 / 256, abs=1e-12)
    assert negbinom(3, 0.5).pmf(4) == pytest.approx(3 / 16, abs=1e-15)
    assert negbinom(3, 0.5).pmf(1) == 0.0


@pytest.mark.parametrize("n,p", [(2, 0.3), (3, 0.64), (6, 0.5), (20, 0.64)])
def test_negbinom_matches_scipy(n, p):
    d = negbinom(n, p)
    for T in range(n - 1, n + 60):
        ref = stats.nbinom.pmf(T - (n - 1), n - 1, p)
        assert d.pmf(T) == pytest.approx(ref, rel=1e-10, abs=1e-300)
        assert d.cdf(T) == pytest.approx(stats.nbinom.cdf(T - (n - 1), n - 1, p), rel=1e-10)


@pytest.mark.parametrize("n,p,T", [(3, 0.64, 6), (4, 0.3, 9), (5, 0.8, 12)])
def test_negbinom_matches_enumeration(n, p, T):
    assert negbinom(n, p).pmf(T) == pytest.approx(enumerate_pmf(n, p, T), rel=1e-12)


@pytest.mark.parametrize("n,p", [(2, 0.1), (20, 0.64), (30, 0.2), (7, 0.99)])
def test_negbinom_mass_and_moments(n, p):
    d = negbinom(n, p)
    Ts = np.array(list(d.support()))
    pm = np.array([d.pmf(T) for T in Ts])
    assert d.sf(int(Ts[-1])) < 1e-10
    assert pm.sum() + d.sf(int(Ts[-1])) == pytest.approx(1.0, abs=1e-12)
    # moments need a deeper cut: the 1e-10 tail still carries T**2 weight
    Ts = np.array(list(d.support(1e-15)))
    pm = np.array([d.pmf(T) for T in Ts])
    mean = float(np.sum(Ts * pm))
    assert abs(mean - d.mean()) <= 1e-8
    assert abs(float(np.sum(Ts**2 * pm)) - mean**2 - d.variance()) <= 1e-8


def test_negbinom_rejects_bad_params():
    with pytest.raises(ValueError):
        negbinom(1, 0.5)
    with pytest.raises(ValueError):
        negbinom(5, 1.0)


# ---------------------------------------------------------------- p_hat


def test_p_hat_examples():
    assert p_hat(1, 0.75) == pytest.approx(0.64, abs=1e-15)
    assert p_hat(1, 0.625) == pytest.approx(96 / 121, abs=1e-15)
    assert p_hat(1, 1e-12) == pytest.approx(1.0)
    assert p_hat(1, 1 - 1e-12) == pytest.approx(0.0, abs=1e-11)


@pytest.mark.parametrize("lam", [1, 2, 3])
@pytest.mark.parametrize("c", [Fraction(1, 10), Fraction(1, 2), Fraction(3, 4), Fraction(5, 8)])
def test_p_hat_exact(lam, c):
    assert p_hat(lam, float(c)) == pytest.approx(float(power_p_hat_exact(lam, c)), abs=1e-15)


@settings(max_examples=200)
@given(lam=st.floats(0.1, 5), c1=st.floats(0.01, 0.99), c2=st.floats(0.01, 0.99))
def test_p_hat_monotone(lam, c1, c2):
    if abs(c1 - c2) < 1e-6:
        return
    lo, hi = min(c1, c2), max(c1, c2)
    assert p_hat(lam, lo) > p_hat(lam, hi)
    assert p_hat(lam * 1.5, lo) > p_hat(lam, lo)


def test_monotonicity_scan():
    grid = [i / 10 for i in range(1, 10)]
    for lam in (0.5, 1, 2):
        assert monotonicity_scan(lam, grid).passed
    rep = monotonicity_scan(1, [0.625, 0.75])
    assert rep.means[0] == pytest.approx(2299 / 96)
    assert rep.means[1] == pytest.approx(29.6875)
    assert monotonicity_scan(1, [0.3]).passed
    with pytest.raises(ValueError):
        monotonicity_scan(1, [0.5, 0.4])


# ---------------------------------------------------------------- compare


def test_empirical_stats():
    e = EmpiricalDist.from_samples([1, 2, 2, 3])
    assert e.trials == 4 and e.mean() == 2.0
    assert e.variance() == pytest.approx(2 / 3)
    assert (e + e).trials == 8
    assert e.freq(2) == 0.5
    assert sorted(e.as_array()) == [1, 2, 2, 3]


def test_compare_exact_samples():
    d = negbinom(20, 0.64)
    rng = np.random.default_rng(2718)
    e = EmpiricalDist.from_samples(sample_negbinom_k(20, 0.64, 20000, rng))
    rep = compare(e, d)
    assert rep.tv_distance < 0.02
    assert abs(rep.mean_z) < 4
    assert rep.chi_square_pvalue > 1e-4
    assert not rep.support_mismatch
    assert set(rep.to_json_dict()) >= {
        "tv_distance", "chi_square", "dof", "empirical_mean", "empirical_var",
        "theory_mean", "theory_var", "mean_z",
    }


def test_compare_truncated_counts():
    d = negbinom(4, 0.5)
    top = 12
    counts = Counter({T: round(d.pmf(T) * 2**40) for T in range(3, top + 1)})
    e = EmpiricalDist(counts)
    kept = sum(d.pmf(T) for T in range(3, top + 1))
    # renormalising the kept mass moves it by the truncated amount
    assert total_variation(e, d) == pytest.approx(1 - kept, rel=1e-6)


def test_compare_flags_wrong_n():
    e = EmpiricalDist.from_samples([3, 4, 5, 6, 7])
    rep = compare(e, negbinom(6, 0.5))
    assert rep.support_mismatch
    assert rep.chi_square_pvalue == 0.0
    assert rep.to_json_dict()["chi_square"] is None


def test_compare_detects_wrong_p():
    rng = np.random.default_rng(1)
    e = EmpiricalDist.from_samples(sample_negbinom_k(20, 0.64, 20000, rng))
    rep = compare(e, negbinom(20, 96 / 121))
    assert rep.tv_distance > 0.2
    assert rep.mean_z > 10


def test_envelope_check_rows():
    b = ProbBounds.constant(0.64)
    rng = np.random.default_rng(4)
    e = EmpiricalDist.from_samples(sample_negbinom_k(3, 0.64, 5000, rng))
    rows = envelope_check(e, 3, b)
    assert rows[0].T == 2
    assert all(r.inside for r in rows if r.checked)
    shifted = EmpiricalDist(Counter({t + 3: k for t, k in e.counts.items()}))
    assert not all(r.inside for r in envelope_check(shifted, 3, b) if r.checked)


def test_pmf_table_columns():
    rows = pmf_table(2, [1, 2], theory=negbinom(2, 0.5))
    assert rows[0] == {
        "T": 1, "empirical_freq": None, "theory_pmf": 0.5, "bound_lower": None, "bound_upper": None,
    }
    rows = pmf_table(2, [1], bounds=ProbBounds.constant(0.5))
    assert rows[0]["theory_pmf"] is None and rows[0]["bound_upper"] == pytest.approx(0.5)
