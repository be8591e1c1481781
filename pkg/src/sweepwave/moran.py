"""Exact continuous-time simulation of the Moran model with growth.

From a state with ``x_j`` individuals of type ``j``, ``N = sum x_j`` and
total fitness ``w = sum (1+gamma)**j x_j`` the chain jumps

* ``x -> x + e_j - e_k`` at rate ``(1+gamma)**j x_j x_k / w`` (a type-``k``
  individual dies and is replaced by a type-``j`` offspring),
* ``x -> x - e_j + e_{j+1}`` at rate ``mu x_j`` (mutation),
* ``(N, x) -> (N + 1, x + e_j)`` at rate ``rho N (1+gamma)**j x_j / w``.

Self-replacements (``j == k``) leave the state unchanged and are skipped
by default, which is exact for the law of the path.

The event loop itself is compiled with numba (see :mod:`._kernel`).
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernel as K
from .errors import EventBudgetExceeded, InvalidParams, Overflow, SimulationError
from .params import ModelParams

TYPE_CAP = 1024
DEFAULT_MAX_EVENTS = 10**10
CHUNK_EVENTS = 1 << 22


@dataclass
class SimConfig:
    """Configuration of one simulation run.

    Stop rules: ``t_end`` (raw model time), ``first_type`` (stop at the
    first appearance of that type) and ``max_events``. Whichever is hit
    first ends the run; hitting ``max_events`` while ``t_end`` or
    ``first_type`` is set raises :class:`EventBudgetExceeded`.

    ``mu`` overrides ``params.mu`` for the simulation and may be 0.
    ``initial_counts`` replaces the all-type-0 start (for tests).
    """

    params: ModelParams
    n0: int | None = None
    seed: int = 0
    replicate: int = 0
    t_end: float | None = None
    first_type: int | None = None
    max_events: int | None = None
    record_dt: float | None = None
    thin_selfreplacement: bool = True
    mu: float | None = None
    initial_counts: dict | None = None
    type_cap: int = TYPE_CAP

    def __post_init__(self):
        if self.t_end is None and self.first_type is None and self.max_events is None:
            raise InvalidParams("a stop rule (t_end, first_type or max_events) is required")
        if self.record_dt is not None and not self.record_dt > 0:
            raise InvalidParams("record_dt must be > 0")
        if self.t_end is not None and self.t_end < 0:
            raise InvalidParams("t_end must be >= 0")
        if self.first_type is not None and self.first_type < 1:
            raise InvalidParams("first_type must be >= 1")
        if self.mu is not None and self.mu < 0:
            raise InvalidParams("mu override must be >= 0")

    @property
    def mutation_rate(self) -> float:
        return self.params.mu if self.mu is None else self.mu

    def initial_size(self) -> int:
        if self.initial_counts is not None:
            return int(sum(self.initial_counts.values()))
        if self.n0 is not None:
            return int(self.n0)
        return initial_population(self.params)

    def as_dict(self) -> dict:
        d = {
            "params": self.params.as_dict(),
            "n0": self.initial_size(),
            "seed": self.seed,
            "replicate": self.replicate,
            "t_end": self.t_end,
            "first_type": self.first_type,
            "max_events": self.max_events,
            "record_dt": self.record_dt,
            "thin_selfreplacement": self.thin_selfreplacement,
            "mu": self.mutation_rate,
        }
        if self.initial_counts is not None:
            d["initial_counts"] = {str(k): v for k, v in sorted(self.initial_counts.items())}
        return d


def initial_population(params: ModelParams) -> int:
    """``ceil(mu**-alpha)``, guarded against integer overflow."""
    log_n = -params.alpha * math.log(params.mu)
    if log_n > 62 * math.log(2):
        raise Overflow(f"mu**-alpha = e**{log_n:.1f} exceeds the 64-bit range")
    return math.ceil(params.mu ** -params.alpha)


def stream(seed: int, replicate: int = 0) -> np.random.Generator:
    """Random stream of replicate ``replicate`` under master seed ``seed``.

    ``SeedSequence(seed, spawn_key=(replicate,))`` feeding a PCG64 generator.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(replicate,))))


class SimState:
    """Type abundances of the chain at time ``t``.

    ``counts`` is a dense int64 array indexed by type; types ``lo..hi`` are
    the active range. Use :attr:`count_map` for the sparse view.
    """

    def __init__(self, counts, t=0.0, events=0, first=None, cap=TYPE_CAP):
        size = cap + 2
        arr = np.zeros(size, dtype=np.int64)
        for j, x in counts.items():
            if x < 0:
                raise InvalidParams("counts must be non-negative")
            if j > cap:
                raise SimulationError(f"type {j} exceeds the type cap {cap}")
            arr[j] = x
        n = int(arr.sum())
        if n >= 2**62:
            raise Overflow("population size exceeds the 64-bit range")
        nz = np.flatnonzero(arr)
        lo, hi = (int(nz[0]), int(nz[-1])) if nz.size else (0, 0)
        self.counts = arr
        self.ints = np.array([n, lo, hi, events], dtype=np.int64)
        self.reals = np.array([t], dtype=np.float64)
        self.first = np.full(size, np.nan)
        self.first[0] = 0.0
        for j in nz:
            self.first[j] = 0.0
        if first:
            for j, tj in first.items():
                self.first[j] = tj
        self.cap = cap

    @property
    def t(self) -> float:
        return float(self.reals[0])

    @property
    def n_total(self) -> int:
        return int(self.ints[K.N_TOTAL])

    @property
    def event_count(self) -> int:
        return int(self.ints[K.EVENTS])

    @property
    def lo(self) -> int:
        return int(self.ints[K.LO])

    @property
    def hi(self) -> int:
        return int(self.ints[K.HI])

    @property
    def count_map(self) -> dict:
        return {int(j): int(self.counts[j]) for j in np.flatnonzero(self.counts)}

    def w(self, gamma: float) -> float:
        """Total fitness ``sum (1+gamma)**j x_j`` (may overflow to inf for huge types)."""
        return math.fsum((1.0 + gamma) ** j * x for j, x in self.count_map.items())

    def first_appearance(self) -> dict:
        return {int(j): float(self.first[j]) for j in np.flatnonzero(~np.isnan(self.first))}

    def copy(self) -> "SimState":
        new = SimState.__new__(SimState)
        new.counts = self.counts.copy()
        new.ints = self.ints.copy()
        new.reals = self.reals.copy()
        new.first = self.first.copy()
        new.cap = self.cap
        return new


def build_initial(config: SimConfig) -> SimState:
    if config.initial_counts is not None:
        return SimState(dict(config.initial_counts), cap=config.type_cap)
    return SimState({0: config.initial_size()}, cap=config.type_cap)


def _powtab(gamma: float, cap: int) -> np.ndarray:
    with np.errstate(over="ignore"):
        tab = np.power(1.0 + gamma, np.arange(cap + 1, dtype=np.float64))
    return tab


@dataclass(frozen=True)
class RateTable:
    """All transition rates out of one state.

    ``replacement`` maps ``(j, k)`` (offspring type, dying type), ``j != k``,
    to its rate. ``self_replacement`` is the summed rate of the ``j == k``
    identity events that the simulator skips.
    """

    replacement: dict
    mutation: dict
    growth: dict
    self_replacement: float

    @property
    def R_rep(self) -> float:
        return math.fsum(self.replacement.values())

    @property
    def R_mut(self) -> float:
        return math.fsum(self.mutation.values())

    @property
    def R_grow(self) -> float:
        return math.fsum(self.growth.values())

    @property
    def total(self) -> float:
        return self.R_rep + self.R_mut + self.R_grow

    def probabilities(self) -> dict:
        """``(channel, j, k) -> probability`` of the next state-changing jump."""
        tot = self.total
        out = {}
        for (j, k), r in self.replacement.items():
            out[("replace", j, k)] = r / tot
        for j, r in self.mutation.items():
            out[("mutate", j, j + 1)] = r / tot
        for j, r in self.growth.items():
            out[("grow", j, j)] = r / tot
        return out


def event_rates(state: SimState, params: ModelParams, mu: float | None = None) -> RateTable:
    """Enumerate every transition rate by brute force over type pairs."""
    mu = params.mu if mu is None else mu
    x = state.count_map
    n = sum(x.values())
    if not x:
        return RateTable({}, {}, {}, 0.0)
    base = min(x)
    fit = {j: (1.0 + params.gamma) ** (j - base) for j in x}
    w = math.fsum(fit[j] * xj for j, xj in x.items())
    rep = {}
    self_rep = []
    for j, xj in x.items():
        for k, xk in x.items():
            r = fit[j] * xj * xk / w
            if j == k:
                self_rep.append(r)
            else:
                rep[(j, k)] = r
    mut = {j: mu * xj for j, xj in x.items()} if mu > 0 else {}
    grow = {j: params.rho * n * fit[j] * xj / w for j, xj in x.items()} if params.rho > 0 else {}
    return RateTable(rep, mut, grow, math.fsum(self_rep))


def step_event(state: SimState, params: ModelParams, rng: np.random.Generator,
               mu: float | None = None, thin: bool = True) -> SimState:
    """Advance ``state`` in place by one event and return it.

    With ``thin`` a state-changing event always happens; without it the
    event may be an identity self-replacement. Raises
    :class:`SimulationError` if no transition is possible.
    """
    mu = params.mu if mu is None else mu
    before = state.event_count
    code = K.advance(state.counts, state.ints, state.reals, state.first,
                     _powtab(params.gamma, state.cap), float(mu), float(params.rho),
                     bool(thin), rng, np.inf, -1, before + 1, state.cap)
    if code == K.ABSORBED:
        raise SimulationError("no transition is possible from this state")
    if code == K.TYPE_CAP:
        raise SimulationError(f"type index would exceed the cap {state.cap}")
    return state


def first_jump_sample(state: SimState, params: ModelParams, rng: np.random.Generator,
                      n: int, mu: float | None = None, thin: bool = True) -> tuple:
    """Draw ``n`` independent first state-changing transitions from ``state``.

    Returns ``(counter, skipped)`` where ``counter`` maps
    ``(channel, j, k)`` to its frequency and ``skipped`` is the number of
    identity events drawn on the way (always 0 with ``thin``).
    """
    mu = params.mu if mu is None else mu
    codes, skipped = K.first_jumps(state.counts.copy(), state.ints.copy(),
                                   _powtab(params.gamma, state.cap), float(mu),
                                   float(params.rho), bool(thin), rng, int(n))
    size = state.counts.shape[0]
    names = {K.REPLACE: "replace", K.MUTATE: "mutate", K.GROW: "grow"}
    vals, cnts = np.unique(codes, return_counts=True)
    out = {}
    for v, c in zip(vals, cnts):
        ch, rest = divmod(int(v), size * size)
        j, k = divmod(rest, size)
        out[(names[ch], j, k)] = int(c)
    return out, int(skipped)


@dataclass
class Sample:
    t: float
    N: int
    counts: dict


@dataclass
class Trajectory:
    samples: list
    first_appearance: dict
    event_count: int
    seed: int
    replicate: int
    status: str
    final: SimState | None = field(default=None, repr=False)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.samples])

    @property
    def sizes(self) -> np.ndarray:
        return np.array([s.N for s in self.samples])

    def counts_of(self, j: int) -> np.ndarray:
        return np.array([s.counts.get(j, 0) for s in self.samples])

    def T(self, k: int) -> float | None:
        return self.first_appearance.get(k)


_STATUS = {
    K.REACHED_TIME: "t_end",
    K.REACHED_TYPE: "first_type",
    K.REACHED_EVENTS: "max_events",
    K.ABSORBED: "absorbed",
}


def run_sim(config: SimConfig, progress: Callable | None = None) -> Trajectory:
    """Simulate until the stop rule, sampling on the ``record_dt`` grid.

    A sample is also taken right after every first appearance of a type.
    Output is a deterministic function of ``config`` (seed and replicate
    included).
    """
    p = config.params
    rng = stream(config.seed, config.replicate)
    state = build_initial(config)
    powtab = _powtab(p.gamma, config.type_cap)
    finite_span = int(np.isfinite(powtab).sum()) - 1
    mu = float(config.mutation_rate)
    rho = float(p.rho)
    t_end = math.inf if config.t_end is None else float(config.t_end)
    stop_type = -1 if config.first_type is None else int(config.first_type)
    primary_cap = config.max_events is not None and config.t_end is None and config.first_type is None
    max_events = DEFAULT_MAX_EVENTS if config.max_events is None else int(config.max_events)

    samples = [Sample(0.0, state.n_total, state.count_map)]
    next_grid = config.record_dt if config.record_dt else math.inf
    grid_i = 1
    status = None
    if stop_type >= 0 and stop_type <= state.hi:
        status = "first_type"
    while status is None:
        target = min(next_grid, t_end)
        chunk_cap = min(max_events, state.event_count + CHUNK_EVENTS)
        code = K.advance(state.counts, state.ints, state.reals, state.first, powtab,
                         mu, rho, bool(config.thin_selfreplacement), rng,
                         target, stop_type, chunk_cap, config.type_cap)
        if state.hi - state.lo >= finite_span:
            raise Overflow("fitness ratios across the active types overflow float64")
        if progress is not None:
            progress(state.event_count, state.t)
        if code == K.TYPE_CAP:
            raise SimulationError(f"type index would exceed the cap {config.type_cap}")
        if code == K.REACHED_EVENTS and state.event_count < max_events:
            continue
        if code in (K.REACHED_TIME, K.ABSORBED) and state.t >= next_grid and next_grid <= t_end:
            samples.append(Sample(state.t, state.n_total, state.count_map))
            grid_i += 1
            next_grid = grid_i * config.record_dt
            if code == K.REACHED_TIME and state.t < t_end:
                continue
        if code == K.NEW_TYPE:
            samples.append(Sample(state.t, state.n_total, state.count_map))
            continue
        if code == K.ABSORBED:
            # nothing can change any more; fill the remaining grid to t_end
            while next_grid <= t_end:
                samples.append(Sample(next_grid, state.n_total, state.count_map))
                grid_i += 1
                next_grid = grid_i * config.record_dt if config.record_dt else math.inf
            if math.isfinite(t_end):
                state.reals[0] = t_end
            status = "absorbed"
            break
        if code == K.REACHED_TYPE:
            samples.append(Sample(state.t, state.n_total, state.count_map))
        status = _STATUS[code]

    if samples[-1].t != state.t:
        samples.append(Sample(state.t, state.n_total, state.count_map))
    traj = Trajectory(samples, state.first_appearance(), state.event_count,
                      config.seed, config.replicate, status, state)
    if status == "max_events" and not primary_cap:
        raise EventBudgetExceeded(
            f"event budget {max_events} exhausted at t={state.t}", traj)
    return traj


@dataclass
class ReplicateSummary:
    replicate: int
    first_appearance: dict
    final_counts: dict
    final_t: float
    N_at_T: dict
    event_count: int
    status: str
    error: str | None = None
    trajectory: Trajectory | None = field(default=None, repr=False)


def _summarise(traj: Trajectory, replicate: int, keep: bool) -> ReplicateSummary:
    n_at = {}
    for k, tk in traj.first_appearance.items():
        for s in traj.samples:
            if s.t == tk:
                n_at[k] = s.N
                break
        else:
            if tk == 0.0:
                n_at[k] = traj.samples[0].N
    final = traj.final
    return ReplicateSummary(replicate, dict(traj.first_appearance), final.count_map,
                            final.t, n_at, traj.event_count, traj.status,
                            trajectory=traj if keep else None)


def _one_replicate(args) -> ReplicateSummary:
    config, r, keep = args
    cfg = SimConfig(**{**config.__dict__, "replicate": r})
    try:
        traj = run_sim(cfg)
    except EventBudgetExceeded as exc:
        summary = _summarise(exc.trajectory, r, keep)
        summary.error = str(exc)
        return summary
    except Exception as exc:  # one failing replicate must not sink the ensemble
        return ReplicateSummary(r, {}, {}, math.nan, {}, 0, "error", f"{type(exc).__name__}: {exc}")
    return _summarise(traj, r, keep)


def run_ensemble(config: SimConfig, replicates: int, workers: int = 1,
                 keep_trajectories: bool = False, order=None) -> list:
    """Run ``replicates`` independent copies of ``config``.

    Replicate ``r`` draws from :func:`stream` ``(config.seed, r)``, so the
    result does not depend on ``workers`` or on ``order`` (an optional
    permutation of the replicate indices used for execution). Results are
    returned sorted by replicate index.
    """
    if replicates < 1:
        raise InvalidParams("replicates must be >= 1")
    idx = list(range(replicates)) if order is None else list(order)
    if sorted(idx) != list(range(replicates)):
        raise InvalidParams("order must be a permutation of range(replicates)")
    jobs = [(config, r, keep_trajectories) for r in idx]
    if workers <= 1:
        results = [_one_replicate(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_replicate, jobs))
    return sorted(results, key=lambda s: s.replicate)

