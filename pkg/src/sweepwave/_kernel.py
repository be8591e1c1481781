"""Compiled event loop for the Moran-with-growth chain.

State lives in plain arrays so a simulation can be resumed chunk by chunk:

``counts``  int64[cap + 2]   type abundances
``ints``    int64[4]         n_total, lo, hi, event_count
``reals``   float64[1]       t
``first``   float64[cap + 2] first-appearance times (NaN until seen)

``powtab[i] = (1 + gamma)**i``. Rates only use fitness ratios, so the
fitness of type ``j`` is taken as ``powtab[j - lo]``; the total fitness is
summed afresh at every event over the active range ``lo..hi``.
"""
import numpy as np
from numba import njit

N_TOTAL, LO, HI, EVENTS = 0, 1, 2, 3

# return codes
REACHED_TIME = 0
REACHED_TYPE = 1
REACHED_EVENTS = 2
ABSORBED = 3
NEW_TYPE = 4
TYPE_CAP = 5

# transition channels
REPLACE, MUTATE, GROW, IDENTITY = 0, 1, 2, 3


@njit(cache=True)
def _pick(weights, lo, hi, target):
    acc = 0.0
    for i in range(lo, hi + 1):
        acc += weights[i]
        if target < acc:
            return i
    # rounding can leave target just above the last partial sum
    for i in range(hi, lo - 1, -1):
        if weights[i] > 0.0:
            return i
    return hi


@njit(cache=True)
def _draw(counts, ints, powtab, fx, rep, mu, rho, thin, rng):
    """Choose the next transition from the current state.

    Returns ``(total_rate, channel, j, k)``. For replacements ``j`` is the
    type of the offspring and ``k`` the type of the individual that dies.
    ``total_rate == 0`` means no transition is possible.
    """
    n = ints[N_TOTAL]
    lo = ints[LO]
    hi = ints[HI]
    F = 0.0
    for i in range(lo, hi + 1):
        fx[i] = powtab[i - lo] * counts[i]
        F += fx[i]
    if thin:
        r_rep = 0.0
        for i in range(lo, hi + 1):
            rep[i] = counts[i] * (F - fx[i]) / F
            r_rep += rep[i]
    else:
        r_rep = float(n)
    r_mut = mu * n
    r_grow = rho * n
    total = r_rep + r_mut + r_grow
    if total <= 0.0:
        return 0.0, -1, -1, -1
    u = rng.random() * total
    if u < r_rep:
        if thin:
            k = _pick(rep, lo, hi, rng.random() * r_rep)
            # offspring j != k, proportional to fitness
            target = rng.random() * (F - fx[k])
            acc = 0.0
            j = -1
            for i in range(lo, hi + 1):
                if i == k:
                    continue
                acc += fx[i]
                if target < acc:
                    j = i
                    break
            if j < 0:
                for i in range(hi, lo - 1, -1):
                    if i != k and fx[i] > 0.0:
                        j = i
                        break
            return total, REPLACE, j, k
        for i in range(lo, hi + 1):
            rep[i] = float(counts[i])
        k = _pick(rep, lo, hi, rng.random() * n)
        j = _pick(fx, lo, hi, rng.random() * F)
        if j == k:
            return total, IDENTITY, j, k
        return total, REPLACE, j, k
    if u < r_rep + r_mut:
        for i in range(lo, hi + 1):
            rep[i] = float(counts[i])
        j = _pick(rep, lo, hi, rng.random() * n)
        return total, MUTATE, j, j + 1
    j = _pick(fx, lo, hi, rng.random() * F)
    return total, GROW, j, j


@njit(cache=True)
def _apply(counts, ints, channel, j, k):
    if channel == REPLACE:
        counts[j] += 1
        counts[k] -= 1
    elif channel == MUTATE:
        counts[j] -= 1
        counts[k] += 1
        if k > ints[HI]:
            ints[HI] = k
    elif channel == GROW:
        counts[j] += 1
        ints[N_TOTAL] += 1
    lo = ints[LO]
    while counts[lo] == 0 and lo < ints[HI]:
        lo += 1
    ints[LO] = lo
    hi = ints[HI]
    while counts[hi] == 0 and hi > lo:
        hi -= 1
    ints[HI] = hi


@njit(cache=True)
def advance(counts, ints, reals, first, powtab, mu, rho, thin, rng,
            t_stop, stop_type, max_events, cap):
    """Run events until a stop condition; returns one of the status codes.

    Crossing ``t_stop`` discards the pending waiting time and parks the
    clock at ``t_stop``; by memorylessness the chain is unchanged in law.
    """
    size = counts.shape[0]
    fx = np.zeros(size)
    rep = np.zeros(size)
    while True:
        if ints[EVENTS] >= max_events:
            return REACHED_EVENTS
        total, channel, j, k = _draw(counts, ints, powtab, fx, rep, mu, rho, thin, rng)
        if total == 0.0:
            return ABSORBED
        t_new = reals[0] + rng.exponential(1.0 / total)
        if t_new > t_stop:
            reals[0] = t_stop
            return REACHED_TIME
        reals[0] = t_new
        ints[EVENTS] += 1
        if channel == IDENTITY:
            continue
        if channel == MUTATE and k > cap:
            return TYPE_CAP
        _apply(counts, ints, channel, j, k)
        if channel == MUTATE and np.isnan(first[k]):
            first[k] = t_new
            if stop_type >= 0 and k >= stop_type:
                return REACHED_TYPE
            return NEW_TYPE


@njit(cache=True)
def first_jumps(counts, ints, powtab, mu, rho, thin, rng, n_samples):
    """Sample the first state-changing transition from a fixed state.

    Returns an int64 array of codes ``channel * M * M + j * M + k`` with
    ``M = counts.shape[0]``, plus the number of identity events skipped.
    """
    size = counts.shape[0]
    fx = np.zeros(size)
    rep = np.zeros(size)
    out = np.empty(n_samples, dtype=np.int64)
    skipped = 0
    for s in range(n_samples):
        while True:
            total, channel, j, k = _draw(counts, ints, powtab, fx, rep, mu, rho, thin, rng)
            if total == 0.0:
                out[s] = -1
                break
            rng.exponential(1.0 / total)
            if channel == IDENTITY:
                skipped += 1
                continue
            out[s] = channel * size * size + j * size + k
            break
    return out, skipped
