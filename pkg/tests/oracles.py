"""Independent reference computations used by the tests.

Nothing here imports from the package; each oracle takes a different route
to the quantity it checks.
"""

import itertools
import math
from fractions import Fraction

import numpy as np


def brute_xi_range(states):
    best_lo, best_hi = math.inf, -math.inf
    for a, b in itertools.combinations(states, 2):
        a = a if np.ndim(a) else (a,)
        b = b if np.ndim(b) else (b,)
        d = math.sqrt(sum((x - y) ** 2 for x, y in zip(a, b)))
        best_lo, best_hi = min(best_lo, d), max(best_hi, d)
    return best_lo, best_hi


def enumerate_pmf(n, p, T):
    """P(K* = T) by summing over every Bernoulli merge sequence of length T."""
    q = 1 - p
    total = 0
    for seq in itertools.product((0, 1), repeat=T):
        if seq[-1] == 1 and sum(seq) == n - 1:
            total += p ** (n - 1) * q ** (T - (n - 1))
    return total


def brute_kernel_extremes(g, f, lo, hi, points=10**6):
    xs = np.linspace(lo, hi, points)
    gv, fv, hv = g(xs), f(xs), f(xs / 2)
    h = hv / (gv - fv + hv)
    return float(h.min()), float(h.max())


def power_p_hat_exact(lam: int, c: Fraction) -> Fraction:
    """Exact merge probability for integer exponents, via Fractions."""
    theta, xi = Fraction(1), Fraction(3)
    g = theta * xi**lam
    f = c * g
    f_half = c * theta * (xi / 2) ** lam
    h = f_half / (g - f + f_half)
    return 1 - h * h


def mixed_ne_by_indifference(A):
    """Symmetric 2x2 game: q making the row player indifferent between rows."""
    (a, b), (c, d) = A
    return (d - b) / (a - b - c + d)


def sample_negbinom_k(n, p, size, rng):
    """K* drawn as n-1 plus the number of failures before the (n-1)-th success."""
    return (n - 1) + rng.negative_binomial(n - 1, p, size=size)
