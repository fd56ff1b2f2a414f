"""Non-asymptotic concentration of the magnetization at low temperature.

All tail probabilities are exact sums over the lumped law; nothing here is
sampled. Tails that underflow double precision are compared through their
logarithms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .exceptions import DomainError, SearchError
from .model_core import (
    ExactMagnetizationDistribution,
    ModelParams,
    eta_statistics,
    exact_distribution,
    solve_cw_roots,
)

__all__ = [
    "chatterjee_bound",
    "exact_lhs_tail",
    "SlopeCheck",
    "check_slope",
    "ConcentrationInterval",
    "k_function",
    "k_function_dm",
    "find_interval",
    "TailReport",
    "tail_decay",
    "DEFAULT_MARGIN",
]

DEFAULT_MARGIN = 1e-3
_GRID_POINTS = 10_000
_BISECTION_DEPTH = 20
_GRID_SLACK = 1e-12


def chatterjee_bound(t: float, beta: float) -> float:
    """Upper bound ``2 exp(-t^2 / (4 (1 + beta)))``."""
    if t < 0 or beta < 0:
        raise DomainError("chatterjee_bound needs t >= 0 and beta >= 0")
    return 2.0 * math.exp(-(t * t) / (4.0 * (1.0 + beta)))


def _cw_deviation(m, params):
    return np.abs(m - np.tanh(params.beta * (m + params.h)))


def exact_lhs_tail(
    params: ModelParams,
    t: float,
    dist: Optional[ExactMagnetizationDistribution] = None,
) -> float:
    """Exact ``P(|m - tanh(beta (m + h))| >= beta/n + t/sqrt(n))``."""
    if dist is None:
        dist = exact_distribution(params)
    n = params.n
    threshold = params.beta / n + t / math.sqrt(n)
    mask = _cw_deviation(dist.m, params) >= threshold
    return float(min(1.0, dist.probs[mask].sum()))


class SlopeCheck(NamedTuple):
    m0: float
    beta_limit: float  # 1 / (1 - m0^2); the claim is beta < beta_limit
    ok: bool
    m1: float
    f_left: float
    f_right: float
    m1_below_m0: bool
    f_left_above_right: bool


def check_slope(beta: float, h: float) -> SlopeCheck:
    """Check ``beta (1 - m0^2) < 1`` and the intermediate inequalities of its proof.

    ``m1 = sqrt((beta - 1) / beta)`` is where the slopes of the two sides of the
    Curie-Weiss equation agree; ``f_left``/``f_right`` are those sides evaluated
    at ``m1`` as functions of ``beta``.
    """
    if beta <= 1 or h <= 0:
        raise DomainError("check_slope needs beta > 1 and h > 0 (mirror h < 0 by symmetry)")
    m0 = solve_cw_roots(ModelParams(beta, h)).m0
    m1 = math.sqrt((beta - 1.0) / beta)
    f_left = math.sqrt((beta - 1.0) * beta) + h * beta
    f_right = math.log(math.sqrt(beta) + math.sqrt(beta - 1.0))
    beta_limit = 1.0 / (1.0 - m0 * m0)
    return SlopeCheck(
        m0=m0,
        beta_limit=beta_limit,
        ok=beta * (1.0 - m0 * m0) < 1.0,
        m1=m1,
        f_left=f_left,
        f_right=f_right,
        m1_below_m0=m1 < m0,
        f_left_above_right=f_left > f_right,
    )


def k_function(m, iota, params: ModelParams, m0: float):
    """``atanh(m') - beta (m + h)`` with ``m' = m - iota (m - m0)``."""
    m = np.asarray(m, dtype=float)
    return np.arctanh(m - iota * (m - m0)) - params.beta * (m + params.h)


def k_function_dm(m, iota, params: ModelParams, m0: float):
    m = np.asarray(m, dtype=float)
    mp = m - iota * (m - m0)
    return (1.0 - iota) / (1.0 - mp * mp) - params.beta


@dataclass(frozen=True)
class ConcentrationInterval:
    """Certificate ``|m - tanh(beta (m + h))| >= iota0 |m - m0|`` on ``[M1, M2]``."""

    iota0: float
    M1: float
    M2: float
    margin: float
    m0: float
    margin_target: float
    grid_min_gap: float = field(default=0.0)  # min of |m - tanh| - iota0 |m - m0| on the grid

    def grid(self, points: int = _GRID_POINTS) -> np.ndarray:
        return np.linspace(self.M1, self.M2, points)

    def holds(self, params: ModelParams, iota: Optional[float] = None, points: int = _GRID_POINTS) -> bool:
        iota = self.iota0 if iota is None else iota
        m = self.grid(points)
        gap = _cw_deviation(m, params) - iota * np.abs(m - self.m0)
        return bool(np.all(gap >= -_GRID_SLACK))

    def as_dict(self) -> dict:
        return {
            "iota0": self.iota0,
            "M1": self.M1,
            "M2": self.M2,
            "margin": self.margin,
            "m0": self.m0,
            "marginTarget": self.margin_target,
        }


def _bisect_largest(pred, lo: float, hi: float, depth: int = _BISECTION_DEPTH) -> float:
    """Largest x on the dyadic grid of [lo, hi] with pred(x), assuming pred(lo)."""
    for _ in range(depth):
        mid = 0.5 * (lo + hi)
        if pred(mid):
            lo = mid
        else:
            hi = mid
    return lo


def find_interval(
    params: ModelParams,
    margin: float = DEFAULT_MARGIN,
    points: int = _GRID_POINTS,
) -> ConcentrationInterval:
    """Construct ``(iota0, M1, M2)`` with ``dK/dm >= margin`` on a grid of ``[M1, M2]``.

    The interval radius is searched first at ``iota = 0`` (keeping ``dK/dm``
    above the midpoint between the margin and its value at ``m0``, bisected to
    machine precision since ``m0`` can sit within 1e-8 of 1), then the
    largest ``iota`` on a 2^-20 bisection grid that keeps the margin is taken.
    If ``dK/dm`` at ``(m0, 0)`` is below ``4 * margin`` the margin is reduced to a
    quarter of that value.
    """
    if params.beta <= 1 or params.h <= 0:
        raise DomainError("find_interval needs beta > 1 and h > 0 (mirror h < 0 by symmetry)")
    m0 = solve_cw_roots(params).m0
    slope0 = float(k_function_dm(m0, 0.0, params, m0))
    if not slope0 > 0:
        raise SearchError("dK/dm at (m0, 0) is not positive", {"m0": m0, "slope": slope0})
    eps = min(margin, 0.25 * slope0)
    radius_target = 0.5 * (slope0 + eps)

    def interval(r):
        return max(0.0, m0 - r), min(1.0, m0 + r)

    def radius_ok(r):
        lo, hi = interval(r)
        m = np.linspace(lo, hi, points)
        m = m[m < 1.0]  # dK/dm at iota = 0 is +inf at m = 1
        return bool(np.all(k_function_dm(m, 0.0, params, m0) >= radius_target))

    r = _bisect_largest(radius_ok, 0.0, 1.0, depth=64)
    M1, M2 = interval(r)
    if not M1 < m0 < M2:
        raise SearchError("interval search collapsed onto m0", {"m0": m0, "radius": r})
    grid = np.linspace(M1, M2, points)

    def iota_ok(iota):
        return bool(np.all(k_function_dm(grid, iota, params, m0) >= eps))

    iota0 = _bisect_largest(iota_ok, 0.0, 1.0)
    if iota0 <= 0:
        raise SearchError("no positive iota keeps the margin", {"m0": m0, "M1": M1, "M2": M2, "eps": eps})

    achieved = float(np.min(k_function_dm(grid, iota0, params, m0)))
    gap = _cw_deviation(grid, params) - iota0 * np.abs(grid - m0)
    kv = k_function(grid, iota0, params, m0)
    # atanh loses ~eps / (1 - |m'|) absolute accuracy near the boundary
    k_slack = _GRID_SLACK + 1e-15 / (1.0 - np.abs(grid - iota0 * (grid - m0)))
    left_ok = np.all((kv <= k_slack)[grid <= m0])
    right_ok = np.all((kv >= -k_slack)[grid >= m0])
    if not (achieved > 0 and np.all(gap >= -_GRID_SLACK) and left_ok and right_ok):
        raise SearchError(
            "post-validation of the interval failed",
            {"iota0": iota0, "M1": M1, "M2": M2, "margin": achieved, "min_gap": float(gap.min())},
        )
    return ConcentrationInterval(
        iota0=iota0,
        M1=M1,
        M2=M2,
        margin=achieved,
        m0=m0,
        margin_target=eps,
        grid_min_gap=float(gap.min()),
    )


@dataclass
class TailReport:
    """Exact outside-window masses ``n^alpha P(|eta| > n^delta)`` along a schedule.

    ``log_values[alpha]`` is the natural log of each entry; ``values`` is the
    same in linear scale and underflows to 0 for large ``n``.
    ``bound`` holds ``2 exp(-t_n^2 / (4 (1 + beta)))`` (2 when ``t_n <= 0``).
    """

    params: ModelParams
    n_schedule: list
    delta: float
    alphas: list
    iota0: float
    log_tail: list
    values: dict
    log_values: dict
    t_n: list
    bound: list
    log_bound: list

    def strictly_decreasing(self, alpha, last: int = 3) -> bool:
        seq = self.log_values[alpha][-last:]
        return all(b < a for a, b in zip(seq, seq[1:]))

    def as_dict(self) -> dict:
        return {
            "params": {"beta": self.params.beta, "h": self.params.h},
            "delta": self.delta,
            "iota0": self.iota0,
            "nSchedule": list(self.n_schedule),
            "logTail": list(self.log_tail),
            "tN": list(self.t_n),
            "bound": list(self.bound),
            "logBound": list(self.log_bound),
            "alphas": {
                str(a): {"values": list(self.values[a]), "logValues": list(self.log_values[a])}
                for a in self.alphas
            },
        }


def tail_decay(
    params: ModelParams,
    delta: float,
    alpha_list: Sequence[float],
    n_schedule: Sequence[int],
    iota0: Optional[float] = None,
) -> TailReport:
    """Exact ``n^alpha P(|eta| > n^delta)`` per ``n`` together with ``t_n``."""
    if not 0 < delta < 0.5:
        raise DomainError("delta must lie in (0, 1/2)")
    n_schedule = [int(n) for n in n_schedule]
    if any(b <= a for a, b in zip(n_schedule, n_schedule[1:])):
        raise DomainError("n_schedule must be strictly ascending")
    params.require_subcritical("tail_decay")
    base = params if params.h > 0 else params.mirrored()
    if iota0 is None:
        iota0 = find_interval(base).iota0
    m0 = solve_cw_roots(params).m0
    beta = params.beta

    log_tail, t_n, bound, log_bound = [], [], [], []
    for n in n_schedule:
        dist = exact_distribution(params.with_n(n))
        stats = eta_statistics(dist, m0)
        log_tail.append(stats.log_tail(n**delta, strict=True))
        tn = iota0 * n**delta - beta / math.sqrt(n)
        t_n.append(tn)
        if tn > 0:
            lb = math.log(2.0) - tn * tn / (4.0 * (1.0 + beta))
        else:
            lb = math.log(2.0)
        log_bound.append(lb)
        bound.append(math.exp(lb))

    log_values = {a: [lt + a * math.log(n) for lt, n in zip(log_tail, n_schedule)] for a in alpha_list}
    values = {a: [math.exp(v) for v in log_values[a]] for a in alpha_list}
    return TailReport(
        params=params,
        n_schedule=n_schedule,
        delta=delta,
        alphas=list(alpha_list),
        iota0=iota0,
        log_tail=log_tail,
        values=values,
        log_values=log_values,
        t_n=t_n,
        bound=bound,
        log_bound=log_bound,
    )
