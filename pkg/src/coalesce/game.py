"""The 2x2 stage game played by two groups, and its equilibrium.

Strategies are ordered ``C`` (change state to merge) then ``D`` (keep
state).  With ``xi`` the distance between the two groups' states the row
player's payoffs are::

            C                  D
    C   g(xi) - f(xi/2)    g(xi) - f(xi)
    D   g(xi)              0

and the column player's matrix is the transpose.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .payoff import PayoffError, PayoffSpec

STABILITY_TOL = 1e-9


class GameDomainError(ValueError):
    pass


@dataclass(frozen=True)
class MixedProfile:
    """Probabilities of ``C`` for the row (``p``) and column (``q``) player."""

    p: float
    q: float

    def __post_init__(self):
        if not (0.0 <= self.p <= 1.0 and 0.0 <= self.q <= 1.0):
            raise ValueError(f"probabilities out of [0, 1]: {self.p}, {self.q}")


@dataclass(frozen=True)
class StageGame:
    xi: float
    payoff_A: np.ndarray
    payoff_B: np.ndarray


def build_game(spec: PayoffSpec, xi: float) -> StageGame:
    if not xi > 0:
        raise GameDomainError(f"stage game needs xi > 0, got {xi}")
    g, f, f_half = spec.g(xi), spec.f(xi), spec.f(xi / 2)
    A = np.array([[g - f_half, g - f], [g, 0.0]])
    return StageGame(xi, A, A.T.copy())


def utility(game: StageGame, profile: MixedProfile) -> tuple[float, float]:
    alpha = np.array([profile.p, 1.0 - profile.p])
    beta = np.array([profile.q, 1.0 - profile.q])
    return float(alpha @ game.payoff_A @ beta), float(alpha @ game.payoff_B @ beta)


def _kernel_parts(spec: PayoffSpec, xi: float) -> tuple[float, float]:
    if not xi > 0:
        raise GameDomainError(f"equilibrium needs xi > 0, got {xi}")
    gain = spec.g(xi) - spec.f(xi)
    half = spec.f(xi / 2)
    if not (gain > 0 and half > 0):
        raise PayoffError(
            f"spec violates f < g or f > 0 at xi={xi} (g-f={gain}, f(xi/2)={half})"
        )
    return gain, half


def cooperation_prob(spec: PayoffSpec, xi: float) -> float:
    """Equilibrium probability of ``C``: ``(g-f) / (g-f+f(xi/2))``."""
    gain, half = _kernel_parts(spec, xi)
    return gain / (gain + half)


def defection_prob(spec: PayoffSpec, xi: float) -> float:
    """Equilibrium probability of ``D``: ``f(xi/2) / (g-f+f(xi/2))``."""
    gain, half = _kernel_parts(spec, xi)
    return half / (gain + half)


def closed_form_ne(spec: PayoffSpec, xi: float) -> MixedProfile:
    p = cooperation_prob(spec, xi)
    return MixedProfile(p, p)


def coalescence_prob(spec: PayoffSpec, xi: float) -> float:
    """Probability that the pair merges, i.e. that not both play ``D``."""
    h = defection_prob(spec, xi)
    return 1.0 - h * h


def aggregate_payoff(spec: PayoffSpec, xi: float, s1: int, s2: int) -> float:
    """Size-weighted expected equilibrium payoff of both groups."""
    if s1 < 1 or s2 < 1:
        raise ValueError("group sizes must be >= 1")
    gain, half = _kernel_parts(spec, xi)
    return (s1 + s2) * gain * spec.g(xi) / (gain + half)


class Equilibria(list):
    """List of :class:`MixedProfile` plus a flag for equilibrium continua."""

    def __init__(self, profiles=(), degenerate: bool = False):
        super().__init__(profiles)
        self.degenerate = degenerate


def _payoffs(A, B, p, q):
    alpha = np.array([p, 1.0 - p])
    beta = np.array([q, 1.0 - q])
    return alpha @ A @ beta, alpha @ B @ beta


def is_stable(A, B, profile: MixedProfile, tol: float = STABILITY_TOL) -> bool:
    """No pure deviation improves either player's utility by more than ``tol``.

    Payoffs are compared after scaling each matrix to unit max-norm.
    """
    A = _normalise(np.asarray(A, dtype=float))
    B = _normalise(np.asarray(B, dtype=float))
    u1, u2 = _payoffs(A, B, profile.p, profile.q)
    best1 = max(_payoffs(A, B, dev, profile.q)[0] for dev in (0.0, 1.0))
    best2 = max(_payoffs(A, B, profile.p, dev)[1] for dev in (0.0, 1.0))
    return best1 <= u1 + tol and best2 <= u2 + tol


def _indifference_root(hi_c, hi_d, lo_c, lo_d, tol):
    """Opponent probability making a player indifferent between its two rows.

    The player earns ``hi_c*x + lo_c*(1-x)`` from its first strategy and
    ``hi_d*x + lo_d*(1-x)`` from its second, ``x`` being the opponent's
    probability of ``C``.  Returns ``(root, everywhere_indifferent)``.
    """
    slope = (hi_c - lo_c) - (hi_d - lo_d)
    offset = lo_c - lo_d
    if abs(slope) <= tol:
        return None, abs(offset) <= tol
    return -offset / slope, False


def _br_interval(d0, d1, tol):
    """Sub-interval of [0, 1] where ``d1 + (d0 - d1)*x >= -tol``."""
    # d(x) = d0*x + d1*(1-x), linear; d0 = d(1), d1 = d(0)
    if abs(d0 - d1) <= tol:
        return (0.0, 1.0) if d1 >= -tol else None
    root = -d1 / (d0 - d1)
    if d0 > d1:
        lo, hi = max(root, 0.0), 1.0
    else:
        lo, hi = 0.0, min(root, 1.0)
    return (lo, hi) if lo <= hi else None


def _normalise(M):
    scale = np.abs(M).max()
    return M / scale if scale > 0 else M


def solve_ne_2x2(A, B, tol: float = STABILITY_TOL) -> Equilibria:
    """All Nash equilibria of a 2x2 bimatrix game by support enumeration.

    Note that the coalescence stage game always has the two pure
    equilibria (C, D) and (D, C) besides its unique completely mixed one.

    Pure supports are tested with the best-response inequalities, the full
    support with the indifference conditions.  In degenerate games where a
    player is indifferent against a pure opponent strategy the equilibria
    form a segment; a representative midpoint is returned and the result is
    flagged ``degenerate``.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != (2, 2) or B.shape != (2, 2):
        raise ValueError("solve_ne_2x2 handles 2x2 games only")
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(B))):
        raise ValueError("payoff entries must be finite")
    # best replies are invariant under positive rescaling of a player's
    # payoffs; normalising makes ``tol`` relative to the payoff scale
    A = _normalise(A)
    B = _normalise(B)

    found: list[MixedProfile] = []
    degenerate = False

    # pure supports; index 0 is C which corresponds to probability 1
    for i in (0, 1):
        for j in (0, 1):
            if A[i, j] >= A[1 - i, j] - tol and B[i, j] >= B[i, 1 - j] - tol:
                found.append(MixedProfile(1.0 - i, 1.0 - j))

    # row mixes: column's q must equalize A's rows
    q_root, row_flat = _indifference_root(A[0, 0], A[1, 0], A[0, 1], A[1, 1], tol)
    # column mixes: row's p must equalize B's columns
    p_root, col_flat = _indifference_root(B[0, 0], B[0, 1], B[1, 0], B[1, 1], tol)

    if q_root is not None and p_root is not None:
        if 0.0 < q_root < 1.0 and 0.0 < p_root < 1.0:
            found.append(MixedProfile(p_root, q_root))

    # one player mixes while the other is pure: only in degenerate games
    for j in (0, 1):
        if abs(A[0, j] - A[1, j]) <= tol:
            # row indifferent against pure column j; column j must be a best reply
            seg = _br_interval(B[0, j] - B[0, 1 - j], B[1, j] - B[1, 1 - j], tol)
            if seg is not None and seg[1] - seg[0] > tol:
                degenerate = True
                found.append(MixedProfile(0.5 * (seg[0] + seg[1]), 1.0 - j))
    for i in (0, 1):
        if abs(B[i, 0] - B[i, 1]) <= tol:
            seg = _br_interval(A[i, 0] - A[1 - i, 0], A[i, 1] - A[1 - i, 1], tol)
            if seg is not None and seg[1] - seg[0] > tol:
                degenerate = True
                found.append(MixedProfile(1.0 - i, 0.5 * (seg[0] + seg[1])))
    if row_flat or col_flat:
        degenerate = True

    unique: list[MixedProfile] = []
    for prof in found:
        if not is_stable(A, B, prof, tol):
            continue
        if any(abs(prof.p - u.p) <= tol and abs(prof.q - u.q) <= tol for u in unique):
            continue
        unique.append(prof)
    return Equilibria(unique, degenerate)
