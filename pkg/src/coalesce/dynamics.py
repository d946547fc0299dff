"""Discrete-time coalescence of groups playing the stage game.

At each step two groups are chosen, both play their equilibrium mixed
strategy independently, and the pair merges unless both defect.  A trial
ends when a single group remains; the step at which that happens is the
coalescence time ``K*``.

Random draws inside a trial are consumed in a fixed order per step: one
uniform for pair selection, then one for the row player's strategy, then
one for the column player's.
"""

from __future__ import annotations

import bisect
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import analysis, streams
from .game import cooperation_prob
from .payoff import PayoffSpec

log = logging.getLogger(__name__)

EPS_XI = 1e-12
DEFAULT_MIN_SEPARATION = 1e-6
DEFAULT_STEP_CAP_FACTOR = 50.0
PAIR_POLICIES = ("uniform", "size_weighted")

State = tuple[float, ...]


class InitializationError(ValueError):
    pass


class TerminalStateError(RuntimeError):
    """Pair selection attempted with fewer than two groups."""


@dataclass(frozen=True)
class Group:
    id: int
    size: int
    state: State


@dataclass
class Population:
    groups: list[Group]
    time: int = 0
    xi_min: float = math.nan
    xi_max: float = math.nan
    next_id: int = 0

    @property
    def n_agents(self) -> int:
        return sum(g.size for g in self.groups)

    def by_id(self, gid: int) -> Group:
        for g in self.groups:
            if g.id == gid:
                return g
        raise KeyError(gid)

    def copy(self) -> "Population":
        return Population(list(self.groups), self.time, self.xi_min, self.xi_max, self.next_id)


@dataclass(frozen=True)
class BoxInit:
    """Uniform states in an axis-aligned box, resampled until separated."""

    low: float = 0.0
    high: float = 10.0
    min_separation: float = DEFAULT_MIN_SEPARATION
    max_retries: int = 1000


@dataclass(frozen=True)
class ExplicitInit:
    states: tuple[State, ...]
    min_separation: float = DEFAULT_MIN_SEPARATION


def _as_states(raw, m: Optional[int] = None) -> tuple[State, ...]:
    out = []
    for s in raw:
        if np.ndim(s) == 0:
            s = (s,)
        out.append(tuple(float(x) for x in s))
    if m is not None and any(len(s) != m for s in out):
        raise InitializationError(f"states must all have dimension {m}")
    return tuple(out)


def _min_gap(states: Sequence[State]) -> float:
    best = math.inf
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            best = min(best, math.dist(states[i], states[j]))
    return best


def init_population(n: int, m: int, generator, rng: Optional[np.random.Generator] = None) -> Population:
    """``n`` singleton groups with pairwise distinct states in ``R^m``."""
    if n < 2 or m < 1:
        raise InitializationError(f"need n >= 2 and m >= 1, got n={n}, m={m}")
    if isinstance(generator, ExplicitInit):
        states = _as_states(generator.states, m)
        if len(states) != n:
            raise InitializationError(f"expected {n} states, got {len(states)}")
        if _min_gap(states) < generator.min_separation:
            raise InitializationError("initial states are not pairwise distinct")
    elif isinstance(generator, BoxInit):
        if rng is None:
            raise InitializationError("box initialisation needs a random stream")
        for _ in range(generator.max_retries):
            pts = rng.uniform(generator.low, generator.high, size=(n, m))
            states = _as_states(pts.tolist(), m)
            if _min_gap(states) >= generator.min_separation:
                break
        else:
            raise InitializationError(
                f"could not separate {n} states by {generator.min_separation} "
                f"after {generator.max_retries} draws"
            )
    else:
        raise TypeError(f"unknown initial-state rule {generator!r}")

    xi_min, xi_max = analysis.xi_range(states)
    groups = [Group(i, 1, s) for i, s in enumerate(states)]
    return Population(groups, 0, xi_min, xi_max, next_id=n)


def _pick_pair(groups: Sequence[Group], u: float, policy: str) -> tuple[int, int]:
    G = len(groups)
    if G < 2:
        raise TerminalStateError("only one group left")
    if policy == "uniform":
        # ordered pairs (i, j), i != j, indexed 0 .. G(G-1)-1
        k = min(int(u * G * (G - 1)), G * (G - 1) - 1)
        i, j = divmod(k, G - 1)
        if j >= i:
            j += 1
        return i, j
    if policy == "size_weighted":
        pairs, cum, total = [], [], 0.0
        for i in range(G):
            for j in range(i + 1, G):
                total += groups[i].size * groups[j].size
                pairs.append((i, j))
                cum.append(total)
        k = min(bisect.bisect_right(cum, u * total), len(pairs) - 1)
        return pairs[k]
    raise ValueError(f"unknown pair policy {policy!r}")


def select_pair(population: Population, rng: np.random.Generator, policy: str = "uniform") -> tuple[int, int]:
    """Ids of the two groups that play next; consumes one uniform draw."""
    if len(population.groups) < 2:
        raise TerminalStateError("only one group left")
    i, j = _pick_pair(population.groups, rng.random(), policy)
    return population.groups[i].id, population.groups[j].id


@dataclass(frozen=True)
class StepEvent:
    time: int
    pair: tuple[int, int]
    sizes: tuple[int, int]
    xi: float
    p_star: float
    strategies: tuple[str, str]
    merged: bool
    new_id: Optional[int] = None
    degenerate: bool = False

    @property
    def delta(self) -> int:
        return int(self.merged)


def _midpoint(a: State, b: State) -> State:
    return tuple(0.5 * (x + y) for x, y in zip(a, b))


def play_round(
    population: Population,
    pair: tuple[int, int],
    spec: PayoffSpec,
    rng: np.random.Generator,
) -> tuple[StepEvent, Population]:
    """Play one stage game between ``pair``; mutates and returns ``population``.

    The first id of ``pair`` is the row player.
    """
    a_id, b_id = pair
    if a_id == b_id:
        raise ValueError("a group cannot play itself")
    idx = {g.id: k for k, g in enumerate(population.groups)}
    ia, ib = idx[a_id], idx[b_id]
    return _play(population, ia, ib, spec, rng.random(), rng.random())


def _play(population, ia, ib, spec, u_row, u_col):
    groups = population.groups
    a, b = groups[ia], groups[ib]
    population.time += 1
    xi = math.dist(a.state, b.state)

    if xi < EPS_XI:
        # already state-consensual: equilibrium is 0/0, merge at the common state
        p_star, strat, new_state, degenerate = 1.0, ("C", "C"), a.state, True
        log.debug("degenerate merge of %d and %d at xi=%g", a.id, b.id, xi)
    else:
        p_star = cooperation_prob(spec, xi)
        strat = ("C" if u_row < p_star else "D", "C" if u_col < p_star else "D")
        degenerate = False
        if strat == ("C", "C"):
            new_state = _midpoint(a.state, b.state)
        elif strat == ("C", "D"):
            new_state = b.state
        elif strat == ("D", "C"):
            new_state = a.state
        else:
            new_state = None

    merged = new_state is not None
    new_id = None
    if merged:
        new_id = population.next_id
        population.next_id += 1
        for k in sorted((ia, ib), reverse=True):
            del groups[k]
        groups.append(Group(new_id, a.size + b.size, new_state))
    event = StepEvent(
        population.time, (a.id, b.id), (a.size, b.size), xi, p_star, strat,
        merged, new_id, degenerate,
    )
    return event, population


@dataclass(frozen=True)
class TrialConfig:
    """Everything one trial needs; the initial states are shared by all trials."""

    spec: PayoffSpec
    initial_states: tuple[State, ...]
    pair_policy: str = "uniform"
    step_cap: Optional[int] = None
    step_cap_factor: float = DEFAULT_STEP_CAP_FACTOR
    xi_min: float = field(init=False)
    xi_max: float = field(init=False)

    def __post_init__(self):
        if self.pair_policy not in PAIR_POLICIES:
            raise ValueError(f"pair_policy must be one of {PAIR_POLICIES}")
        if len(self.initial_states) < 2:
            raise ValueError("need at least two initial states")
        xi_min, xi_max = analysis.xi_range(self.initial_states)
        if xi_min <= 0:
            raise InitializationError("initial states are not pairwise distinct")
        object.__setattr__(self, "xi_min", xi_min)
        object.__setattr__(self, "xi_max", xi_max)
        if self.step_cap is None:
            b = analysis.kernel_bounds(self.spec, xi_min, xi_max)
            cap = math.ceil(self.step_cap_factor * (self.n - 1) / b.p_low)
            object.__setattr__(self, "step_cap", cap)

    @property
    def n(self) -> int:
        return len(self.initial_states)

    def bounds(self) -> analysis.ProbBounds:
        return analysis.kernel_bounds(self.spec, self.xi_min, self.xi_max)

    def population(self) -> Population:
        groups = [Group(i, 1, s) for i, s in enumerate(self.initial_states)]
        return Population(groups, 0, self.xi_min, self.xi_max, next_id=self.n)


def make_config(
    spec: PayoffSpec,
    n: int,
    m: int,
    master_seed: int,
    init=None,
    **kw,
) -> TrialConfig:
    """Draw the shared initial configuration from ``master_seed`` and wrap it."""
    init = BoxInit() if init is None else init
    pop = init_population(n, m, init, streams.init_stream(master_seed))
    return TrialConfig(spec, tuple(g.state for g in pop.groups), **kw)


@dataclass
class TrialResult:
    k_star: Optional[int]
    events: list[StepEvent] = field(default_factory=list)
    final_state: Optional[State] = None
    cap_exceeded: bool = False
    merges: int = 0
    xi_excursions: int = 0
    min_xi_seen: float = math.inf


def run_trial(config: TrialConfig, rng: np.random.Generator, keep_events: bool = True) -> TrialResult:
    """Run one trial to full coalescence or to ``config.step_cap`` steps.

    ``xi_excursions`` counts steps whose pair distance fell below the
    smallest initial distance; midpoint moves make this possible.
    """
    pop = config.population()
    spec, policy, cap = config.spec, config.pair_policy, config.step_cap
    xi_floor = pop.xi_min * (1.0 - 1e-12)
    events = []
    merges = excursions = 0
    min_xi = math.inf
    while len(pop.groups) > 1:
        if pop.time >= cap:
            log.warning("trial hit the step cap %d with %d groups left", cap, len(pop.groups))
            return TrialResult(None, events, None, True, merges, excursions, min_xi)
        ia, ib = _pick_pair(pop.groups, rng.random(), policy)
        ev, _ = _play(pop, ia, ib, spec, rng.random(), rng.random())
        if keep_events:
            events.append(ev)
        merges += ev.merged
        min_xi = min(min_xi, ev.xi)
        if ev.xi < xi_floor:
            excursions += 1
    return TrialResult(pop.time, events, pop.groups[0].state, False, merges, excursions, min_xi)


def _run_chunk(config, master_seed, indices, keep_events):
    return [
        run_trial(config, streams.trial_stream(master_seed, i), keep_events)
        for i in indices
    ]


def monte_carlo(
    config: TrialConfig,
    trials: int,
    master_seed: int,
    workers: int = 1,
    keep_events: bool = True,
) -> list[TrialResult]:
    """Independent trials from the same initial states, in trial-index order.

    Trial ``i`` uses ``trial_stream(master_seed, i)``, so the output does
    not depend on ``workers``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if workers <= 1:
        return _run_chunk(config, master_seed, range(trials), keep_events)
    chunks = [range(s, trials, workers) for s in range(workers)]
    results: list[Optional[TrialResult]] = [None] * trials
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futs = [pool.submit(_run_chunk, config, master_seed, ch, keep_events) for ch in chunks]
        for ch, fut in zip(chunks, futs):
            for i, res in zip(ch, fut.result()):
                results[i] = res
    return results
