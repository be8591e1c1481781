"""Deterministic piecewise-linear limit of the rescaled type sizes.

On the ``(1/L) log+`` scale, with time measured in units of ``L/gamma``,
the sizes ``y_j(t)`` of the types evolve linearly between *wave events*.
Between events the type ``m`` on the population line
``alpha + t*rho/gamma`` is dominant and every other present type moves with
slope ``lambda_{j-m}/gamma``, clamped at zero. A wave ends when either

* a type ``m < j < k*`` reaches the population line (dominance change), or
* the edge type ``k*`` reaches level 1, which gives birth to type ``k*+1``.

:func:`run_limit` iterates :func:`advance_wave` and records the result as a
:class:`PiecewisePath` that can be evaluated exactly at any time.
"""
from __future__ import annotations

import bisect
import math
import warnings
from dataclasses import dataclass, field

from .errors import InvalidParams, NonGenericParameters, OutOfHorizon
from .params import ModelParams, gamma_pow, lambda_growth

BIRTH = "birth"
DOMINANCE = "dominance"

TIE_RTOL = 1e-9
BLOWUP_DELTA = 1e-12
BLOWUP_RUN = 3
INVARIANT_TOL = 1e-9


@dataclass(frozen=True)
class LimitState:
    """State of the limit system at a wave boundary ``s_n``.

    ``y`` holds levels for types ``0..k_star``; every type beyond is zero.
    """

    params: ModelParams
    s: float
    y: tuple
    m: int
    k: int
    k_star: int
    alpha_line: float
    n: int = 0

    def level(self, j: int) -> float:
        return self.y[j] if 0 <= j < len(self.y) else 0.0


@dataclass(frozen=True)
class WaveEvent:
    """One step of the construction: wave ``index`` ends at ``time``."""

    index: int
    time: float
    kind: str
    target: int
    delta: float
    candidates: dict

    @property
    def new_type(self):
        return self.target + 1 if self.kind == BIRTH else None

    @property
    def new_dominant(self):
        return self.target if self.kind == DOMINANCE else None

    @property
    def label(self) -> int:
        """New type for a birth, new dominant type for a dominance change."""
        return self.target + 1 if self.kind == BIRTH else self.target


@dataclass
class PiecewisePath:
    params: ModelParams
    segments: dict
    events: list
    snapshots: list
    truncation: str
    end_time: float
    tstar_estimate: float | None = None
    _starts: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._starts = {j: [seg[0] for seg in segs] for j, segs in self.segments.items()}

    @property
    def event_times(self) -> list:
        return [ev.time for ev in self.events]

    @property
    def deltas(self) -> list:
        return [ev.delta for ev in self.events]

    @property
    def max_type(self) -> int:
        return max(self.segments) if self.segments else 0

    def alpha_line(self, t: float) -> float:
        return self.params.alpha + t * self.params.rho / self.params.gamma

    def __call__(self, j: int, t: float) -> float:
        return eval_path(self, j, t)


def _check_invariants(state: LimitState, tol: float = INVARIANT_TOL) -> list:
    """Return a list of violated invariants (empty when the state is valid)."""
    y, m, k = state.y, state.m, state.k
    problems = []
    if y[m] != state.alpha_line:
        problems.append(f"y[{m}]={y[m]!r} is not on the population line {state.alpha_line!r}")
    if any(v == state.alpha_line for v in y[m + 1:]):
        problems.append("dominant index is not the largest type on the population line")
    if any(v > state.alpha_line + tol for v in y):
        problems.append("a type lies above the population line")
    for j in range(m, k + 1):
        if not y[j] > 0:
            problems.append(f"y[{j}] must be positive for m <= j <= k")
    if any(v != 0 for v in y[k + 1:]):
        problems.append("types beyond k must be zero")
    for j in range(0, k + 1):
        if state.level(j + 1) < y[j] - 1 - tol:
            problems.append(f"y[{j + 1}] < y[{j}] - 1")
    expected_star = k + 1 if y[k] == 1.0 else k
    if state.k_star != expected_star:
        problems.append(f"k_star={state.k_star} but expected {expected_star}")
    return problems


def _settle(params, s, y, m, alpha_line, n) -> LimitState:
    k = max(j for j, v in enumerate(y) if v > 0)
    k_star = k + 1 if y[k] == 1.0 else k
    y = list(y[: k_star + 1]) + [0.0] * (k_star + 1 - len(y))
    return LimitState(params, s, tuple(y), m, k, k_star, alpha_line, n)


def init_state(params: ModelParams) -> LimitState:
    """Initial levels ``y_j(0) = (alpha - j)^+`` with type 0 dominant."""
    if not isinstance(params, ModelParams):
        raise InvalidParams("params must be a ModelParams instance")
    alpha = params.alpha
    if float(alpha).is_integer():
        warnings.warn(
            f"integer alpha={alpha} lies on the boundary of the generic parameter set",
            stacklevel=2,
        )
    top = math.ceil(alpha) - 1
    y = [max(alpha - j, 0.0) for j in range(top + 1)]
    return _settle(params, 0.0, y, 0, alpha, 0)


def wave_candidates(state: LimitState) -> dict:
    """Candidate durations ``j -> delta_{n,j}`` for the wave starting at ``state``."""
    p = state.params
    g = p.gamma
    m, ks = state.m, state.k_star
    out = {}
    for j in range(m + 1, ks):
        # lambda_{j-m} - rho == (1 + rho) * gamma_{j-m}
        out[j] = (state.alpha_line - state.y[j]) * g / ((1.0 + p.rho) * gamma_pow(p, j - m))
    edge_rate = lambda_growth(p, ks - m)
    if edge_rate > 0:
        out[ks] = (1.0 - state.y[ks]) * g / edge_rate
    return out


def _slopes(state: LimitState) -> list:
    p = state.params
    return [lambda_growth(p, j - state.m) / p.gamma for j in range(state.k_star + 1)]


def advance_wave(state: LimitState) -> tuple:
    """Run one wave. Returns ``(WaveEvent, next LimitState)``.

    Raises :class:`NonGenericParameters` if the two smallest candidates agree
    to relative tolerance ``1e-9``.
    """
    p = state.params
    cands = wave_candidates(state)
    if not cands:
        raise InvalidParams("no admissible event: the limit system is stationary")
    ranked = sorted(cands.items(), key=lambda kv: kv[1])
    target, delta = ranked[0]
    if len(ranked) > 1:
        second = ranked[1][1]
        if second - delta <= TIE_RTOL * max(abs(delta), abs(second)):
            raise NonGenericParameters(state.n, cands)

    slopes = _slopes(state)
    alpha_line = state.alpha_line + delta * p.rho / p.gamma
    y = [max(v + delta * sl, 0.0) for v, sl in zip(state.y, slopes)]
    y[state.m] = alpha_line
    if target == state.k_star:
        kind = BIRTH
        y[target] = 1.0
        m = state.m
    else:
        kind = DOMINANCE
        y[target] = alpha_line
        m = target
    event = WaveEvent(state.n, state.s + delta, kind, target, delta, cands)
    new = _settle(p, state.s + delta, y, m, alpha_line, state.n + 1)
    problems = _check_invariants(new)
    if problems:
        raise AssertionError(f"invariants broken after wave {state.n}: {problems}")
    return event, new


def run_limit(params: ModelParams, horizon: float | None = None, max_waves: int | None = None,
              state: LimitState | None = None) -> PiecewisePath:
    """Build the limit path up to ``horizon`` (scaled time) or ``max_waves`` waves.

    The run also stops, flagging ``"blowup"``, once three consecutive waves
    are shorter than ``1e-12``; the partial sum of the wave lengths is then
    kept in ``tstar_estimate``. A tie between candidates raises
    :class:`NonGenericParameters` carrying the offending wave index and the
    path built so far in ``exc.path``.
    """
    if horizon is None and max_waves is None:
        raise InvalidParams("give a horizon, max_waves, or both")
    if state is None:
        state = init_state(params)

    segments: dict = {}
    snapshots = [state]
    events: list = []

    def record(st: LimitState, end: float | None):
        for j, (v, sl) in enumerate(zip(st.y, _slopes(st))):
            if v == 0.0 and j != st.k_star:
                continue
            segs = segments.setdefault(j, [])
            segs.append((st.s, v, sl))
            if sl < 0 and end is not None:
                zero = st.s + v / -sl
                if zero < end:
                    segs.append((zero, 0.0, 0.0))

    truncation = None
    small_run = 0
    total = 0.0
    while True:
        if horizon is not None and state.s >= horizon:
            truncation = "horizon"
            break
        if max_waves is not None and len(events) >= max_waves:
            truncation = "max_waves"
            break
        try:
            event, nxt = advance_wave(state)
        except NonGenericParameters as exc:
            record(state, None)
            exc.path = PiecewisePath(params, segments, events, snapshots,
                                     "nongeneric", state.s)
            raise
        record(state, nxt.s)
        events.append(event)
        snapshots.append(nxt)
        total += event.delta
        state = nxt
        small_run = small_run + 1 if event.delta < BLOWUP_DELTA else 0
        if small_run >= BLOWUP_RUN:
            truncation = "blowup"
            break
    # final boundary point so evaluation at end_time uses the post-event levels
    for j, v in enumerate(state.y):
        if v > 0:
            segments.setdefault(j, []).append((state.s, v, 0.0))
    tstar = total if truncation == "blowup" else None
    return PiecewisePath(params, segments, events, snapshots, truncation, state.s, tstar)


def eval_path(path: PiecewisePath, j: int, t: float) -> float:
    """Exact value of ``y_j(t)`` on the constructed path."""
    if not 0 <= t <= path.end_time:
        raise OutOfHorizon(f"t={t} outside [0, {path.end_time}]")
    starts = path._starts.get(j)
    if not starts:
        return 0.0
    i = bisect.bisect_right(starts, t) - 1
    if i < 0:
        return 0.0
    t0, v0, slope = path.segments[j][i]
    return max(v0 + slope * (t - t0), 0.0)


@dataclass(frozen=True)
class BirthTime:
    k: int
    b: float
    gap: float


def birth_times(path: PiecewisePath) -> list:
    """Scaled birth times ``b(k)`` of types ``k >= 1`` and the gaps ``b(k) - b(k-1)``.

    Types whose parent starts at or above level 1 are present from time 0;
    every other type is born when its parent first climbs to level 1.
    """
    y0 = path.snapshots[0].y
    times = {0: 0.0}
    k = 1
    while k - 1 < len(y0) and y0[k - 1] >= 1.0:
        times[k] = 0.0
        k += 1
    for ev in path.events:
        if ev.kind == BIRTH:
            times[ev.new_type] = ev.time
    out = []
    for k in sorted(times):
        if k == 0:
            continue
        out.append(BirthTime(k, times[k], times[k] - times.get(k - 1, 0.0)))
    return out
