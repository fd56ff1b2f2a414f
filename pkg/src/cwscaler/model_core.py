"""Exact, deterministic computations on the Curie-Weiss model.

Conventions: magnetization is the per-spin average ``m = (2k - n) / n`` where
``k`` is the number of up spins, and the Hamiltonian is
``H(x) = -n * (m**2 / 2 + h * m)``. The integer up-spin count ``k`` is the
canonical coordinate; ``m`` and the centered/scaled ``eta = sqrt(n) (m - m0)``
are derived from it.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import gammaln, logsumexp

from .exceptions import DomainError, PhaseError, ResourceError

__all__ = [
    "Phase",
    "ModelParams",
    "SpinState",
    "ExactMagnetizationDistribution",
    "CwRoots",
    "EtaStatistics",
    "hamiltonian",
    "rate_function",
    "rate_function_derivative",
    "solve_cw_roots",
    "exact_distribution",
    "eta_statistics",
    "DEFAULT_MAX_N",
]

DEFAULT_MAX_N = 10**7

_SCAN_INTERVALS = 10_000
_SCAN_EDGE = 1e-12
_BISECT_XTOL = 1e-13


class Phase(str, enum.Enum):
    SUBCRITICAL = "subcritical"  # beta > 1, h != 0
    CRITICAL = "critical"  # beta == 1, h == 0
    SUPERCRITICAL = "supercritical"  # beta < 1
    COEXISTENCE = "coexistence"  # beta > 1, h == 0: two symmetric minimizers
    CRITICAL_FIELD = "critical-field"  # beta == 1, h != 0


def _classify(beta: float, h: float) -> Phase:
    if beta < 1:
        return Phase.SUPERCRITICAL
    if beta == 1:
        return Phase.CRITICAL if h == 0 else Phase.CRITICAL_FIELD
    return Phase.SUBCRITICAL if h != 0 else Phase.COEXISTENCE


@dataclass(frozen=True)
class ModelParams:
    """Inverse temperature ``beta``, external field ``h`` and system size ``n``.

    ``n`` only matters for finite-size operations; the Curie-Weiss roots and
    the limiting diffusion depend on ``(beta, h)`` alone.
    """

    beta: float
    h: float
    n: int = 1
    phase: Phase = field(init=False, compare=False)

    def __post_init__(self):
        beta = float(self.beta)
        h = float(self.h)
        if not np.isfinite(beta) or beta <= 0:
            raise DomainError(f"beta must be a positive real, got {self.beta!r}")
        if not np.isfinite(h):
            raise DomainError(f"h must be finite, got {self.h!r}")
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"n must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "h", h)
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "phase", _classify(beta, h))

    @property
    def is_subcritical(self) -> bool:
        return self.phase is Phase.SUBCRITICAL

    def with_n(self, n: int) -> "ModelParams":
        return replace(self, n=n)

    def mirrored(self) -> "ModelParams":
        """Parameters under the spin-flip symmetry ``h -> -h``."""
        return replace(self, h=-self.h)

    def require_subcritical(self, what: str = "this operation") -> None:
        if not self.is_subcritical:
            raise PhaseError(
                f"{what} needs the subcritical phase (beta > 1 and h != 0); "
                f"got beta={self.beta:g}, h={self.h:g} which is {self.phase.value}"
            )

    def as_dict(self) -> dict:
        return {"beta": self.beta, "h": self.h, "n": self.n, "phase": self.phase.value}


@dataclass(frozen=True)
class SpinState:
    """A configuration in {-1, +1}^n with a cached up-spin count."""

    spins: np.ndarray
    up_count: int

    def __post_init__(self):
        spins = np.asarray(self.spins, dtype=np.int8)
        if spins.ndim != 1 or spins.size == 0:
            raise DomainError("spins must be a non-empty 1-d vector")
        if not np.all((spins == 1) | (spins == -1)):
            raise DomainError("spins must take values in {-1, +1}")
        if int(np.count_nonzero(spins == 1)) != self.up_count:
            raise DomainError("up_count does not match the spin vector")
        spins.setflags(write=False)
        object.__setattr__(self, "spins", spins)
        object.__setattr__(self, "up_count", int(self.up_count))

    @classmethod
    def from_spins(cls, spins) -> "SpinState":
        spins = np.asarray(spins, dtype=np.int8)
        return cls(spins, int(np.count_nonzero(spins == 1)))

    @classmethod
    def all_up(cls, n: int) -> "SpinState":
        return cls(np.ones(n, dtype=np.int8), n)

    @classmethod
    def all_down(cls, n: int) -> "SpinState":
        return cls(-np.ones(n, dtype=np.int8), 0)

    @property
    def n(self) -> int:
        return self.spins.size

    @property
    def magnetization(self) -> float:
        return (2 * self.up_count - self.n) / self.n


def hamiltonian(state: SpinState, params: ModelParams) -> float:
    """Energy ``-n (m^2/2 + h m)`` of a spin configuration."""
    if state.n != params.n:
        raise DomainError(f"state has {state.n} spins but params.n = {params.n}")
    m = state.magnetization
    return -params.n * (0.5 * m * m + params.h * m)


def rate_function(m, params: ModelParams):
    """Large-deviation rate function of the magnetization (up to a constant).

    Accepts a scalar or an array of magnetizations in the open interval (-1, 1).
    """
    m_arr = np.asarray(m, dtype=float)
    if np.any(np.abs(m_arr) >= 1) or np.any(~np.isfinite(m_arr)):
        raise DomainError("rate_function is defined only for |m| < 1")
    beta, h = params.beta, params.h
    value = (
        -(0.5 * beta * m_arr**2 + beta * h * m_arr)
        + 0.5 * (1 - m_arr) * np.log1p(-m_arr)
        + 0.5 * (1 + m_arr) * np.log1p(m_arr)
    )
    return float(value) if value.ndim == 0 else value


def rate_function_derivative(m, params: ModelParams):
    m_arr = np.asarray(m, dtype=float)
    value = np.arctanh(m_arr) - params.beta * (m_arr + params.h)
    return float(value) if value.ndim == 0 else value


@dataclass(frozen=True)
class CwRoots:
    """Solutions of ``m = tanh(beta (m + h))`` in (-1, 1).

    ``m0`` is the global minimizer of the rate function. When ``h == 0`` and
    ``beta > 1`` both ``m0`` and ``-m0`` are global minimizers; this is flagged
    by ``symmetric_tie`` and ``m0`` is reported as the positive one.
    ``degenerate`` marks a tangential (double) root.
    """

    roots: tuple
    m0: float
    rate_values: tuple
    symmetric_tie: bool = False
    degenerate: bool = False

    @property
    def minimizers(self) -> tuple:
        if self.symmetric_tie:
            return (-self.m0, self.m0)
        return (self.m0,)


def _cw_residual(m, beta, h):
    return m - np.tanh(beta * (m + h))


def _newton_polish(r, beta, h):
    t = np.tanh(beta * (r + h))
    slope = 1.0 - beta * (1.0 - t * t)
    if slope == 0.0:
        return r
    step = (r - t) / slope
    candidate = r - step
    if abs(candidate) < 1 and abs(_cw_residual(candidate, beta, h)) <= abs(r - t):
        return candidate
    return r


def solve_cw_roots(params: ModelParams) -> CwRoots:
    """Locate every root of the Curie-Weiss equation and pick the minimizer."""
    beta, h = params.beta, params.h
    inner = np.linspace(-1 + _SCAN_EDGE, 1 - _SCAN_EDGE, _SCAN_INTERVALS + 1)
    # Strong fields push roots past the scan edge; the outermost cells reach
    # the last doubles before +-1.
    edge = np.nextafter(1.0, 0.0)
    grid = np.concatenate(([-edge], inner, [edge]))
    g = _cw_residual(grid, beta, h)

    roots = [float(x) for x in grid[g == 0.0]]
    for i in np.flatnonzero(g[:-1] * g[1:] < 0):
        r = brentq(_cw_residual, grid[i], grid[i + 1], args=(beta, h), xtol=_BISECT_XTOL)
        roots.append(_newton_polish(r, beta, h))

    # Tangential roots: extrema of g that touch zero without a sign change.
    degenerate = False
    gp = 1.0 - beta / np.cosh(beta * (grid + h)) ** 2
    for i in np.flatnonzero(gp[:-1] * gp[1:] < 0):
        c = brentq(
            lambda x: 1.0 - beta / np.cosh(beta * (x + h)) ** 2,
            grid[i],
            grid[i + 1],
            xtol=_BISECT_XTOL,
        )
        if abs(_cw_residual(c, beta, h)) <= 1e-12 and all(abs(c - r) > 1e-6 for r in roots):
            roots.append(c)
            degenerate = True

    # When tanh rounds to +-1 the root is not representable inside (-1, 1);
    # the outermost double is then a root to one ulp.
    for e in (-edge, edge):
        if abs(_cw_residual(e, beta, h)) <= 1e-15 and all(abs(e - r) > 1e-6 for r in roots):
            roots.append(float(e))

    roots = sorted(set(float(r) for r in roots))
    rate_values = tuple(float(rate_function(r, params)) for r in roots)
    tie = beta > 1 and h == 0 and len(roots) == 3
    if tie:
        m0 = roots[-1]
    else:
        # Tiny |h| leaves the two wells equal to rounding; the field picks the side.
        best = min(rate_values)
        near = [r for r, v in zip(roots, rate_values) if v <= best + 1e-14 * max(1.0, abs(best))]
        m0 = max(near) if h > 0 else min(near) if h < 0 else near[int(np.argmin([abs(r) for r in near]))]
    return CwRoots(tuple(roots), float(m0), rate_values, symmetric_tie=tie, degenerate=degenerate)


@dataclass(frozen=True)
class ExactMagnetizationDistribution:
    """Exact law of the up-spin count ``k`` under the Gibbs measure."""

    params: ModelParams
    log_weights: np.ndarray
    probs: np.ndarray
    log_probs: np.ndarray

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.n + 1)

    @property
    def m(self) -> np.ndarray:
        n = self.n
        return (2 * self.k - n) / n

    def eta(self, m0: float) -> np.ndarray:
        return np.sqrt(self.n) * (self.m - m0)

    def cdf(self) -> np.ndarray:
        return np.cumsum(self.probs)

    def sample_levels(self, rng: np.random.Generator, size=None):
        """Draw up-spin counts by inverse-CDF sampling."""
        cdf = self.cdf()
        u = rng.random(size)
        return np.minimum(np.searchsorted(cdf, u * cdf[-1], side="right"), self.n)

    def to_csv(self, path, m0: float) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "m", "eta", "prob"])
            for k, m, e, p in zip(self.k, self.m, self.eta(m0), self.probs):
                writer.writerow([int(k), repr(float(m)), repr(float(e)), repr(float(p))])


def exact_distribution(params: ModelParams, max_n: int = DEFAULT_MAX_N) -> ExactMagnetizationDistribution:
    """Lump the Gibbs measure onto the ``n + 1`` magnetization levels.

    Weights ``C(n, k) exp(n beta (m^2/2 + h m))`` are kept in log space and
    normalized with log-sum-exp.
    """
    n = params.n
    if n > max_n:
        raise ResourceError(f"n = {n} exceeds the exact-distribution cap {max_n}")
    k = np.arange(n + 1, dtype=float)
    m = (2 * k - n) / n
    log_binom = gammaln(n + 1.0) - gammaln(k + 1.0) - gammaln(n - k + 1.0)
    direct = log_binom + n * params.beta * (0.5 * m * m + params.h * m)
    # The direct weights are O(n log n) and lose ~1e-12 relative accuracy at
    # n ~ 1e3. Rebuild them from the O(1) neighbour log-ratios, accumulated
    # outward from the mode, so that weight ratios (detailed balance) stay
    # accurate to a few ulps.
    kk = k[:-1]
    log_ratio = np.log((n - kk) / (kk + 1.0)) + 2 * params.beta * (m[:-1] + params.h) + 2 * params.beta / n
    mode = int(np.argmax(direct))
    shifted = np.zeros(n + 1)
    shifted[mode + 1 :] = np.cumsum(log_ratio[mode:])
    shifted[:mode] = -np.cumsum(log_ratio[:mode][::-1])[::-1]
    shifted -= shifted.max()
    log_weights = shifted + direct.max()
    log_probs = shifted - logsumexp(shifted)
    probs = np.exp(log_probs)
    if params.h == 0:
        # exact mirror symmetry; removes last-ulp asymmetries from gammaln
        probs = 0.5 * (probs + probs[::-1])
        log_probs = 0.5 * (log_probs + log_probs[::-1])
    for arr in (log_weights, probs, log_probs):
        arr.setflags(write=False)
    return ExactMagnetizationDistribution(params, log_weights, probs, log_probs)


class EtaStatistics(NamedTuple):
    mean: float
    variance: float
    tail: Callable[..., float]
    log_tail: Callable[..., float]


def eta_statistics(dist: ExactMagnetizationDistribution, m0: float) -> EtaStatistics:
    """Mean, variance and tail function of ``eta = sqrt(n) (m - m0)``.

    ``tail(c)`` is ``P(|eta| >= c)``; pass ``strict=True`` for ``P(|eta| > c)``.
    ``log_tail`` returns the natural log of the same probability (``-inf`` when
    the event is empty), which stays meaningful after ``tail`` underflows.
    """
    if not -1 < m0 < 1:
        raise DomainError("m0 must lie in (-1, 1)")
    eta = dist.eta(m0)
    probs = dist.probs
    mean = float(np.dot(probs, eta))
    variance = float(np.dot(probs, (eta - mean) ** 2))
    abs_eta = np.abs(eta)
    log_probs = dist.log_probs

    def _mask(c, strict):
        return abs_eta > c if strict else abs_eta >= c

    def tail(c: float, strict: bool = False) -> float:
        sel = _mask(c, strict)
        inside = probs[~sel].sum()
        if inside < 0.5:
            return float(max(0.0, 1.0 - inside))
        return float(min(1.0, probs[sel].sum()))

    def log_tail(c: float, strict: bool = False) -> float:
        sel = _mask(c, strict)
        if not sel.any():
            return -np.inf
        return float(min(0.0, logsumexp(log_probs[sel])))

    return EtaStatistics(mean, variance, tail, log_tail)
