"""Quantitative checks of the Ornstein-Uhlenbeck scaling limit.

The limit ``dY = -2 ell Y dt + sigma dB`` is compared with the finite-n
chain through four proxies: the exact stationary variance, the Kolmogorov
distance of the exact stationary marginal, path autocovariances, and the
generator discrepancy on smooth test functions.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Iterable, NamedTuple, Optional, Sequence

import numpy as np
from scipy.stats import norm

from .exceptions import CWError, DomainError
from .lumped_kernel import LumpedKernel, build_kernel, generator_apply, moment_profile
from .model_core import (
    ExactMagnetizationDistribution,
    ModelParams,
    eta_statistics,
    exact_distribution,
    solve_cw_roots,
)

__all__ = [
    "OUParams",
    "ou_params",
    "asymptotic_moment_oracle",
    "ks_distance",
    "AutocovRow",
    "AutocovResult",
    "autocov_compare",
    "TestFunction",
    "default_test_functions",
    "linear_test_function",
    "quadratic_test_function",
    "GeneratorDiscrepancy",
    "generator_discrepancy",
    "moment_errors",
    "NCell",
    "ConvergenceReport",
    "convergence_report",
]


@dataclass(frozen=True)
class OUParams:
    ell: float
    sigma: float
    stationary_variance: float
    m0: float

    @classmethod
    def from_m0(cls, beta: float, m0: float) -> "OUParams":
        """Plug-in constants for a given ``m0``; no sign checks on ``ell``."""
        a = abs(m0)
        ell = 1.0 / (1.0 + a) - beta * (1.0 - a)
        sigma = 2.0 * math.sqrt(1.0 - a)
        var = sigma**2 / (4.0 * ell) if ell != 0 else math.inf
        return cls(ell, sigma, var, m0)

    def autocovariance(self, lag):
        return self.stationary_variance * np.exp(-2.0 * self.ell * np.asarray(lag, dtype=float))

    def as_dict(self) -> dict:
        return {"ell": self.ell, "sigma": self.sigma, "stationaryVariance": self.stationary_variance, "m0": self.m0}


def ou_params(params: ModelParams) -> OUParams:
    params.require_subcritical("ou_params")
    ou = OUParams.from_m0(params.beta, solve_cw_roots(params).m0)
    if not ou.ell > 0:
        raise CWError(f"ell = {ou.ell} is not positive; beta (1 - m0^2) < 1 should force ell > 0")
    return ou


def asymptotic_moment_oracle(params: ModelParams, eta: float) -> tuple:
    """Leading-order limits of the scaled drift and second moment at ``eta``.

    Expands the kernel around ``m0``: with acceptance ``a(x) = min(1, e^x)``,

        p_up(m)   = (1 - m)/2 * a( 2 beta (m + h))
        p_down(m) = (1 + m)/2 * a(-2 beta (m + h))

    and ``m = m0 + eta/sqrt(n)``, the drift ``2 sqrt(n) (p_up - p_down)`` tends
    to ``2 eta d/dm (p_up - p_down)|m0`` and ``4 (p_up + p_down)`` tends to its
    value at ``m0``. The O(1/n) part of the log-ratio drops out.
    """
    params.require_subcritical("asymptotic_moment_oracle")
    beta, h = params.beta, params.h
    m0 = solve_cw_roots(params).m0
    x = 2.0 * beta * (m0 + h)

    def acc(z):
        return (min(1.0, math.exp(z)), math.exp(z) if z < 0 else 0.0)  # value, derivative

    a_up, da_up = acc(x)
    a_dn, da_dn = acc(-x)
    up, down = 0.5 * (1 - m0) * a_up, 0.5 * (1 + m0) * a_dn
    d_up = -0.5 * a_up + 0.5 * (1 - m0) * da_up * 2.0 * beta
    d_dn = 0.5 * a_dn - 0.5 * (1 + m0) * da_dn * 2.0 * beta
    drift_limit = 2.0 * (d_up - d_dn) * eta
    second_limit = 4.0 * (up + down)
    return drift_limit, second_limit


def ks_distance(dist: ExactMagnetizationDistribution, m0: float, ou: OUParams) -> float:
    """Kolmogorov distance between the exact law of eta and N(0, sigma^2 / (4 ell))."""
    eta = dist.eta(m0)
    right = np.cumsum(dist.probs)
    left = right - dist.probs
    target = norm.cdf(eta, scale=math.sqrt(ou.stationary_variance))
    return float(max(np.max(np.abs(right - target)), np.max(np.abs(left - target))))


class AutocovRow(NamedTuple):
    lag: float
    empirical: float
    analytic: float
    stderr: float

    @property
    def z(self) -> float:
        return (self.empirical - self.analytic) / self.stderr if self.stderr > 0 else math.inf


@dataclass
class AutocovResult:
    rows: list
    dt: float
    n_batches: int
    horizon: float
    short_horizon: bool

    def within(self, n_stderr: float = 3.0) -> bool:
        return all(abs(r.empirical - r.analytic) <= n_stderr * r.stderr for r in self.rows)

    def as_list(self) -> list:
        return [r._asdict() for r in self.rows]


def autocov_compare(
    path,
    ou: OUParams,
    lags: Sequence[float],
    dt: float = 0.1,
    n_batches: int = 20,
    center: Optional[float] = None,
) -> AutocovResult:
    """Empirical path autocovariance against ``(sigma^2 / 4 ell) exp(-2 ell t)``.

    The step path is resampled on a uniform grid of spacing ``dt``; standard
    errors come from ``n_batches`` contiguous batch means of the lagged
    products. ``center`` is the known stationary mean; when omitted the
    sample mean is used, which biases the estimate down by about
    ``Var(mean)``.
    """
    horizon = path.horizon
    short = horizon < 10.0 / ou.ell
    if short:
        warnings.warn(f"horizon {horizon:g} is shorter than 10/ell = {10 / ou.ell:g}", RuntimeWarning, stacklevel=2)
    grid = np.arange(0.0, horizon + 0.5 * dt, dt)
    y = path.value_at(grid)
    y = y - (y.mean() if center is None else center)
    rows = []
    for lag in lags:
        shift = int(round(lag / dt))
        if not math.isclose(shift * dt, lag, rel_tol=1e-9, abs_tol=1e-12):
            raise DomainError(f"lag {lag} is not a multiple of dt = {dt}")
        prod = y[: y.size - shift] * y[shift:]
        usable = prod.size - prod.size % n_batches
        batches = prod[:usable].reshape(n_batches, -1).mean(axis=1)
        stderr = float(batches.std(ddof=1) / math.sqrt(n_batches))
        rows.append(AutocovRow(float(lag), float(prod.mean()), float(ou.autocovariance(lag)), stderr))
    return AutocovResult(rows, dt, n_batches, horizon, short)


@dataclass(frozen=True)
class TestFunction:
    """A test function with its first two derivatives (all vectorized).

    ``increment(eta, s) = f(eta + s) - f(eta)`` in closed form is optional;
    polynomials supply it to avoid cancellation at large ``|eta|``.
    """

    __test__ = False

    name: str
    f: Callable
    d1: Callable
    d2: Callable
    increment: Optional[Callable] = None


def _damped_monomial(j: int) -> TestFunction:
    def f(x):
        return x**j * np.exp(-0.5 * x * x)

    def d1(x):
        lower = j * x ** (j - 1) if j >= 1 else 0.0
        return (lower - x ** (j + 1)) * np.exp(-0.5 * x * x)

    def d2(x):
        lower = j * (j - 1) * x ** (j - 2) if j >= 2 else 0.0
        return (lower - (2 * j + 1) * x**j + x ** (j + 2)) * np.exp(-0.5 * x * x)

    return TestFunction(f"eta^{j} exp(-eta^2/2)", f, d1, d2)


def default_test_functions() -> list:
    return [_damped_monomial(j) for j in range(4)]


def linear_test_function() -> TestFunction:
    return TestFunction(
        "eta",
        lambda x: np.asarray(x, dtype=float),
        lambda x: np.ones_like(x),
        lambda x: np.zeros_like(x),
        increment=lambda x, s: np.full_like(x, s),
    )


def quadratic_test_function() -> TestFunction:
    return TestFunction(
        "eta^2",
        lambda x: np.asarray(x, dtype=float) ** 2,
        lambda x: 2.0 * np.asarray(x, dtype=float),
        lambda x: np.full_like(x, 2.0),
        increment=lambda x, s: (2.0 * x + s) * s,
    )


def limit_generator(fn: TestFunction, ou: OUParams, eta):
    """``G phi = -2 ell eta phi' + sigma^2 phi'' / 2``."""
    eta = np.asarray(eta, dtype=float)
    return -2.0 * ou.ell * eta * fn.d1(eta) + 0.5 * ou.sigma**2 * fn.d2(eta)


@dataclass
class GeneratorDiscrepancy:
    total: float
    per_function: dict
    n: int
    delta: float


def _window(kernel: LumpedKernel, delta: float) -> np.ndarray:
    return np.flatnonzero(np.abs(kernel.eta) <= kernel.n**delta)


def generator_discrepancy(
    kernel: LumpedKernel,
    ou: OUParams,
    delta: float,
    test_fns: Optional[Iterable[TestFunction]] = None,
) -> GeneratorDiscrepancy:
    """Sup over ``|eta| <= n^delta`` of ``|G_n phi - G phi|`` for each test function."""
    fns = default_test_functions() if test_fns is None else list(test_fns)
    idx = _window(kernel, delta)
    eta = kernel.eta[idx]
    per = {}
    for fn in fns:
        diff = generator_apply(kernel, fn.f, idx, fn.increment) - limit_generator(fn, ou, eta)
        per[fn.name] = float(np.max(np.abs(diff))) if idx.size else 0.0
    return GeneratorDiscrepancy(max(per.values(), default=0.0), per, kernel.n, delta)


class MomentErrors(NamedTuple):
    drift: float
    second_moment: float
    third_moment: float


def moment_errors(kernel: LumpedKernel, ou: OUParams, delta: float = 0.3) -> MomentErrors:
    """Sup over ``|eta| <= n^delta`` of the drift, second- and third-moment errors."""
    prof = moment_profile(kernel)
    idx = _window(kernel, delta)
    eta = prof.eta[idx]
    return MomentErrors(
        drift=float(np.max(np.abs(prof.drift[idx] + 2.0 * ou.ell * eta))),
        second_moment=float(np.max(np.abs(prof.second_moment[idx] - ou.sigma**2))),
        third_moment=float(np.max(prof.p_moment(3)[idx])),
    )


@dataclass
class NCell:
    n: int
    variance: float
    mean: float
    ks: float
    drift_err_sup: float
    second_moment_err_sup: float
    generator_err: float
    generator_per_function: dict

    def as_dict(self) -> dict:
        return {
            "n": self.n,
            "variance": self.variance,
            "mean": self.mean,
            "ks": self.ks,
            "momentErrSup": max(self.drift_err_sup, self.second_moment_err_sup),
            "driftErrSup": self.drift_err_sup,
            "secondMomentErrSup": self.second_moment_err_sup,
            "generatorErr": self.generator_err,
            "generatorErrPerFunction": dict(self.generator_per_function),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NCell":
        return cls(
            n=int(d["n"]),
            variance=d["variance"],
            mean=d["mean"],
            ks=d["ks"],
            drift_err_sup=d["driftErrSup"],
            second_moment_err_sup=d["secondMomentErrSup"],
            generator_err=d["generatorErr"],
            generator_per_function=dict(d["generatorErrPerFunction"]),
        )


@dataclass
class ConvergenceReport:
    params: ModelParams
    ou: OUParams
    delta: float
    cells: list
    autocov: list = field(default_factory=list)

    @property
    def n_schedule(self) -> list:
        return [c.n for c in self.cells]

    @property
    def target_variance(self) -> float:
        return self.ou.stationary_variance

    @property
    def variances(self) -> list:
        return [c.variance for c in self.cells]

    @property
    def ks_distances(self) -> list:
        return [c.ks for c in self.cells]

    @property
    def generator_errors(self) -> list:
        return [c.generator_err for c in self.cells]

    def as_dict(self) -> dict:
        return {
            "params": {"beta": self.params.beta, "h": self.params.h},
            "m0": self.ou.m0,
            "ouParams": self.ou.as_dict(),
            "delta": self.delta,
            "perN": [c.as_dict() for c in self.cells],
            "autocov": list(self.autocov),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceReport":
        p = d["params"]
        ou = d["ouParams"]
        return cls(
            params=ModelParams(p["beta"], p["h"]),
            ou=OUParams(ou["ell"], ou["sigma"], ou["stationaryVariance"], ou["m0"]),
            delta=d["delta"],
            cells=[NCell.from_dict(c) for c in d["perN"]],
            autocov=list(d.get("autocov", [])),
        )


def _cell(params: ModelParams, n: int, ou: OUParams, delta: float, test_fns) -> NCell:
    p = params.with_n(n)
    dist = exact_distribution(p)
    stats = eta_statistics(dist, ou.m0)
    kernel = build_kernel(p, ou.m0)
    errs = moment_errors(kernel, ou, delta)
    gen = generator_discrepancy(kernel, ou, delta, test_fns)
    return NCell(
        n=n,
        variance=stats.variance,
        mean=stats.mean,
        ks=ks_distance(dist, ou.m0, ou),
        drift_err_sup=errs.drift,
        second_moment_err_sup=errs.second_moment,
        generator_err=gen.total,
        generator_per_function=gen.per_function,
    )


def convergence_report(
    params: ModelParams,
    n_schedule: Sequence[int],
    delta: float = 0.3,
    test_fns: Optional[Iterable[TestFunction]] = None,
    workers: int = 1,
) -> ConvergenceReport:
    """Exact finite-n diagnostics for every ``n`` in the schedule."""
    if not 0 < delta < 0.5:
        raise DomainError("delta must lie in (0, 1/2)")
    n_schedule = [int(n) for n in n_schedule]
    if any(b <= a for a, b in zip(n_schedule, n_schedule[1:])):
        raise DomainError("n_schedule must be strictly ascending")
    ou = ou_params(params)
    fns = default_test_functions() if test_fns is None else list(test_fns)

    def run(n):
        try:
            return _cell(params, n, ou, delta, fns)
        except CWError as exc:
            raise type(exc)(f"n={n}: {exc}") from exc

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            cells = list(pool.map(run, n_schedule))
    else:
        cells = [run(n) for n in n_schedule]
    return ConvergenceReport(params, ou, delta, cells)
