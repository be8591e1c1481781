"""Closed-form regime theory for a fixed population.

``r_j = sum_{i<=j} gamma/gamma_i`` splits ``alpha`` into regimes. In
regime ``j`` the fittest present type leads the dominant one by ``j``
classes. Regimes 1 and 2 have explicit gap formulas. Regime 3 reduces to a
two-dimensional map whose fixed point gives the asymptotic gap. For large
``alpha``, :func:`blowup_certificate` gives a one-sided test that
infinitely many waves pile up in finite time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import ConditionViolated, OutOfRegime
from .params import ModelParams, gamma_pow

TAIL_TOL = 1e-12
S_TAIL_TOL = 1e-10


@dataclass(frozen=True)
class RegimeReport:
    thresholds: list
    r_inf: float
    regime_index: int
    conjectural: bool
    notes: list = field(default_factory=list)

    def r(self, j: int) -> float:
        """``r_j`` for ``1 <= j <= J``."""
        return self.thresholds[j - 1]


def threshold(params: ModelParams, j: int) -> float:
    g = params.gamma
    return math.fsum(g / gamma_pow(params, i) for i in range(1, j + 1))


def r_infinity(params: ModelParams, tol: float = TAIL_TOL) -> float:
    """Sum ``gamma/gamma_i`` until the geometric tail bound drops below ``tol``.

    For ``i > j`` the terms are at most ``(1+g)**-i / (1 - (1+g)**-(j+1))``,
    so the remaining tail is below ``(1+g)**-j / (1 - (1+g)**-(j+1))``.
    """
    g = params.gamma
    q = 1.0 / (1.0 + g)
    terms = []
    j = 0
    while True:
        j += 1
        terms.append(g / gamma_pow(params, j))
        tail = q ** j / (1.0 - q ** (j + 1))
        if tail < tol:
            return math.fsum(terms)


def regime_thresholds(params: ModelParams, J: int = 8) -> RegimeReport:
    if J < 2:
        raise ValueError("J must be >= 2")
    g = params.gamma
    terms = [g / gamma_pow(params, i) for i in range(1, J + 1)]
    rs = [math.fsum(terms[:j]) for j in range(1, J + 1)]
    rinf = r_infinity(params)
    alpha = params.alpha
    index = max((j for j, r in enumerate(rs, start=1) if r <= alpha), default=0)
    notes = []
    if index == J:
        notes.append(f"alpha >= r_{J}: regime index is at least {J}")
    if index >= 3:
        notes.append("classification beyond regime 2 is conjectural")
    if alpha > rinf:
        notes.append("alpha > r_inf: waves may still settle to a constant gap; "
                     "r_inf is not a sharp blow-up threshold")
    return RegimeReport(rs, rinf, index, index >= 3, notes)


def regime1_closed_form(params: ModelParams) -> tuple:
    """``(first_gap, beta)`` for ``1 < alpha < r_2``.

    ``first_gap = 2 - alpha`` is the scaled time until type 2 is born and
    every later gap equals ``beta = (2 + gamma) - (1 + gamma) * alpha``.
    """
    g, alpha = params.gamma, params.alpha
    r2 = threshold(params, 2)
    if not 1 < alpha < r2:
        raise OutOfRegime(f"alpha={alpha} is not in regime 1 (1, {r2})")
    return 2.0 - alpha, (2.0 + g) - (1.0 + g) * alpha


@dataclass(frozen=True)
class Regime2Result:
    betas: dict
    iterates: list
    r_star: float
    beta_inf: float
    ell: float
    conditions_ok: bool

    def __iter__(self):
        return iter((self.betas, self.r_star, self.beta_inf, self.conditions_ok))


def regime2_recursion(params: ModelParams, j_max: int = 50) -> Regime2Result:
    """Gap coefficients ``beta_j`` (``2 <= j <= j_max``) in regime 2.

    The size ``x`` of type ``k-2`` when type ``k-1`` reaches level 1 obeys
    the affine map ``f(x) = r_2 + ell * (alpha - x)`` started at ``r_2``.
    ``beta_j`` is the limit of the scaled waiting time between the first
    type ``j-1`` and the first type ``j`` individual: in terms of
    :func:`sweepwave.limit.birth_times`, ``beta_j == gap(j + 1)``.
    """
    g, alpha = params.gamma, params.alpha
    r2 = threshold(params, 2)
    r3 = threshold(params, 3)
    if not r2 < alpha < r3:
        raise OutOfRegime(f"alpha={alpha} is not in regime 2 ({r2}, {r3})")
    ell = (1.0 + g) / (2.0 + g)
    c3 = 3.0 + 3.0 * g + g * g
    g2 = gamma_pow(params, 2)
    g3 = gamma_pow(params, 3)

    def f(x):
        return r2 + ell * (alpha - x)

    def beta(x):
        return (alpha - x) + (1.0 - c3 * (alpha - x)) / (2.0 + g)

    ok = alpha < (2.0 + g) / (1.0 + g)
    betas = {2: g / g2}
    iterates = []
    x = r2
    for j in range(3, j_max + 1):
        iterates.append(x)
        betas[j] = beta(x)
        # (2c) and the iterate bound r_2 <= f^j(r_2) < alpha
        ok = ok and r2 <= x < alpha
        # (2b): type k-2 fixes before type k reaches level 1
        ok = ok and g3 * (alpha - x) / g < 1.0
        # (2a): type k-2 fixes before type k-1
        ok = ok and (alpha - 1.0) / g2 > (alpha - x) / g
        x = f(x)
    r_star = (r2 + ell * alpha) / (1.0 + ell)
    return Regime2Result(betas, iterates, r_star, beta(r_star), ell, ok)


@dataclass(frozen=True)
class Regime3Step:
    new_x: float
    new_y: float
    t1: float
    t2: float
    conditions_ok: bool

    def __iter__(self):
        return iter((self.new_x, self.new_y, self.t1, self.t2, self.conditions_ok))


def regime3_conditions(params: ModelParams, x: float, y: float) -> dict:
    """Evaluate conditions (3a)-(3c) for one iteration from ``(x, y)``."""
    g, alpha = params.gamma, params.alpha
    g2, g3, g4 = (gamma_pow(params, i) for i in (2, 3, 4))
    t1 = alpha - x
    # phase 1: type k-4 dominant, k-3 climbs to alpha at unit slope
    fix_km2 = (alpha - y) * g / g2
    fix_km1 = (alpha - 1.0) * g / g3
    birth_k = g / g4
    a = t1 < fix_km2 and t1 < fix_km1
    b = t1 < birth_k
    # phase 2: type k-3 dominant
    y_km2 = y + t1 * g2 / g
    y_km1 = 1.0 + t1 * g3 / g
    t2 = (g / g3) * (1.0 - t1 * g4 / g)
    c = t2 < (alpha - y_km2) and t2 < (alpha - y_km1) * g / g2
    return {"3a": a, "3b": b, "3c": c}


def regime3_map(params: ModelParams, state: tuple, check: bool = True) -> Regime3Step:
    """One iteration of the regime-3 map ``(x, y) -> (f1(x, y), f2(x, y))``.

    ``x`` and ``y`` are the levels of types ``k-3`` and ``k-2`` when type
    ``k-1`` reaches level 1 while type ``k-4`` is dominant.
    """
    g, alpha = params.gamma, params.alpha
    if check:
        r3, r4 = threshold(params, 3), threshold(params, 4)
        if not r3 < alpha < r4:
            raise OutOfRegime(f"alpha={alpha} is not in regime 3 ({r3}, {r4})")
    x, y = state
    g2, g3, g4 = (gamma_pow(params, i) for i in (2, 3, 4))
    t1 = alpha - x
    t2 = (g / g3) * (1.0 - t1 * g4 / g)
    new_x = y + t1 * g2 / g + t2
    new_y = 1.0 + t1 * g3 / g + t2 * g2 / g
    conds = regime3_conditions(params, x, y)
    admissible = 1.0 < x < alpha and 1.0 < y < x
    return Regime3Step(new_x, new_y, t1, t2, admissible and all(conds.values()))


def regime3_seed(params: ModelParams) -> tuple:
    g = params.gamma
    g2, g3 = gamma_pow(params, 2), gamma_pow(params, 3)
    return 1.0 + g / g2 + g / g3, 1.0 + g2 / g3


def regime3_iterate(params: ModelParams, n: int = 30, seed: tuple | None = None,
                    strict: bool = True) -> list:
    """Iterates ``[(x0, y0), (x1, y1), ...]`` of the regime-3 map.

    With ``strict`` a :class:`ConditionViolated` is raised at the first
    iterate that leaves the admissible set.
    """
    xy = regime3_seed(params) if seed is None else tuple(seed)
    out = [xy]
    for i in range(n):
        step = regime3_map(params, xy)
        if strict and not step.conditions_ok:
            raise ConditionViolated(i)
        xy = (step.new_x, step.new_y)
        out.append(xy)
    return out


def regime3_fixed_point(params: ModelParams, tol: float = 1e-10, max_iter: int = 10_000,
                        seed: tuple | None = None) -> tuple:
    xy = regime3_seed(params) if seed is None else tuple(seed)
    for _ in range(max_iter):
        step = regime3_map(params, xy)
        nxt = (step.new_x, step.new_y)
        if max(abs(nxt[0] - xy[0]), abs(nxt[1] - xy[1])) < tol:
            return nxt
        xy = nxt
    raise RuntimeError("regime-3 map did not converge")


@dataclass(frozen=True)
class BlowupCertificate:
    """One-sided certificate that the wave times sum to a finite ``t*``.

    ``certified == False`` does not show that ``t*`` is infinite.
    """

    S_values: list
    S: float
    a: int
    condition_alpha: bool
    condition_ratio: bool
    certified: bool
    tstar_bound: float | None
    note: str = ""


def S_j(params: ModelParams, j: int, tol: float = S_TAIL_TOL) -> float:
    """Upper estimate of ``sum_{i>=0} gamma_j / gamma_{j+i}``.

    Truncated once the bound ``(1+g)**-I * (1+g)/g / (1 - (1+g)**-(j+I))``
    on the remaining tail is below ``tol``; that bound is added, so the
    value returned never undershoots the series.
    """
    g = params.gamma
    q = 1.0 / (1.0 + g)
    gj = gamma_pow(params, j)
    terms = []
    i = 0
    while True:
        terms.append(gj / gamma_pow(params, j + i))
        i += 1
        tail = q ** i * (1.0 + g) / g / (1.0 - q ** (j + i))
        if tail < tol:
            return math.fsum(terms) + tail


def _tstar_bound(params: ModelParams, a: int) -> float:
    g = params.gamma
    q = 1.0 / (1.0 + g)
    terms = []
    n = 0
    while True:
        terms.append(g / gamma_pow(params, a + n))
        n += 1
        # remaining terms <= g * q**(a+n) / (1 - q**(a+n)) / (1 - q)
        tail = g * q ** (a + n) / (1.0 - q ** (a + n)) / (1.0 - q)
        if tail < TAIL_TOL:
            return math.fsum(terms) + tail


def blowup_certificate(params: ModelParams) -> BlowupCertificate:
    """Check the sufficient conditions ``alpha > 1 + 2S`` and
    ``gamma_{a/2} / gamma_a < 1/S`` with ``a = floor(alpha)``.

    Every term of ``S_j`` increases with ``j`` and tends to ``(1+g)**-i``,
    so ``S = sup_j S_j = (1 + g)/g`` exactly. ``S_values`` lists the
    truncated ``S_j`` for ``j = 1..max(64, 4*ceil(alpha))`` for reference.
    """
    g, alpha = params.gamma, params.alpha
    jmax = max(64, 4 * math.ceil(alpha))
    values = [S_j(params, j) for j in range(1, jmax + 1)]
    S = (1.0 + g) / g
    a = math.floor(alpha)
    cond_alpha = alpha > 1.0 + 2.0 * S
    cond_ratio = a >= 1 and gamma_pow(params, a / 2) / gamma_pow(params, a) < 1.0 / S
    certified = cond_alpha and cond_ratio
    bound = _tstar_bound(params, a) if certified else None
    note = "S = (1+gamma)/gamma: S_j increases termwise in j"
    return BlowupCertificate(values, S, a, cond_alpha, cond_ratio, certified, bound, note)
