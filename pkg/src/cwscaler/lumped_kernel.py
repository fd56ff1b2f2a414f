"""Birth-death kernel of the single-spin-flip Metropolis-Hastings chain.

Because the energy depends on a configuration only through its magnetization,
the spin chain lumps exactly onto the up-spin count ``k``. In the centered and
scaled coordinate ``eta = sqrt(n) (m - m0)`` every accepted flip moves
``eta`` by ``+-2/sqrt(n)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .exceptions import DomainError
from .model_core import ModelParams

__all__ = [
    "EtaGridPoint",
    "LumpedKernel",
    "LocalMoments",
    "MomentProfile",
    "phi",
    "proposal_prob",
    "build_kernel",
    "local_moments",
    "moment_profile",
    "generator_apply",
    "LOG_ACCEPT_FLOOR",
]

# exp() underflows to 0 below this; clamping keeps NaN out of the kernel.
LOG_ACCEPT_FLOOR = -745.0


@dataclass(frozen=True)
class EtaGridPoint:
    k: int
    n: int
    m0: float

    @property
    def m(self) -> float:
        return (2 * self.k - self.n) / self.n

    @property
    def eta(self) -> float:
        return np.sqrt(self.n) * (self.m - self.m0)


def phi(eta, params: ModelParams, m0: float):
    """Energy in eta coordinates, ``-eta^2/2 - sqrt(n) (m0 + h) eta``."""
    eta = np.asarray(eta, dtype=float)
    value = -0.5 * eta**2 - np.sqrt(params.n) * (m0 + params.h) * eta
    return float(value) if value.ndim == 0 else value


def proposal_prob(k: int, direction: int, params: ModelParams) -> float:
    """Probability that a uniformly chosen spin flip moves level ``k`` up or down."""
    n = params.n
    if not 0 <= k <= n:
        raise DomainError(f"level k={k} outside [0, {n}]")
    if direction == 1:
        return (n - k) / n
    if direction == -1:
        return k / n
    raise DomainError("direction must be +1 or -1")


@dataclass(frozen=True)
class LumpedKernel:
    params: ModelParams
    m0: float
    p_up: np.ndarray
    p_down: np.ndarray
    p_stay: np.ndarray

    @property
    def n(self) -> int:
        return self.params.n

    @property
    def step(self) -> float:
        """Jump size in eta."""
        return 2.0 / np.sqrt(self.n)

    @property
    def k(self) -> np.ndarray:
        return np.arange(self.n + 1)

    @property
    def m(self) -> np.ndarray:
        return (2 * self.k - self.n) / self.n

    @property
    def eta(self) -> np.ndarray:
        return np.sqrt(self.n) * (self.m - self.m0)

    def grid_point(self, k: int) -> EtaGridPoint:
        return EtaGridPoint(int(k), self.n, self.m0)

    def transition_matrix(self):
        """Sparse tridiagonal transition matrix on levels ``0..n``."""
        from scipy.sparse import diags

        return diags([self.p_down[1:], self.p_stay, self.p_up[:-1]], [-1, 0, 1], format="csr")

    def to_csv(self, path) -> None:
        prof = moment_profile(self)
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["k", "eta", "pUp", "pDown", "pStay", "drift", "secondMoment"])
            for row in zip(self.k, self.eta, self.p_up, self.p_down, self.p_stay, prof.drift, prof.second_moment):
                writer.writerow([int(row[0])] + [repr(float(v)) for v in row[1:]])


def _log_acceptance(params: ModelParams):
    """Log MH acceptance of up and down moves from every level.

    ``beta [Phi(eta) - Phi(eta +- 2/sqrt(n))]`` simplifies to
    ``+-2 beta (m + h) + 2 beta / n``; the simplified form avoids the
    O(n) cancellation in evaluating ``Phi`` directly.
    """
    n, beta, h = params.n, params.beta, params.h
    m = (2 * np.arange(n + 1) - n) / n
    log_ratio_up = 2 * beta * (m + h) + 2 * beta / n
    log_ratio_down = -2 * beta * (m + h) + 2 * beta / n
    acc_up = np.exp(np.maximum(np.minimum(0.0, log_ratio_up), LOG_ACCEPT_FLOOR))
    acc_down = np.exp(np.maximum(np.minimum(0.0, log_ratio_down), LOG_ACCEPT_FLOOR))
    return acc_up, acc_down


def build_kernel(params: ModelParams, m0: float) -> LumpedKernel:
    """Exact transition probabilities ``P(k -> k +- 1)`` of the lumped MH chain."""
    n = params.n
    k = np.arange(n + 1)
    acc_up, acc_down = _log_acceptance(params)
    p_up = (n - k) / n * acc_up
    p_down = k / n * acc_down
    p_up[n] = 0.0
    p_down[0] = 0.0
    p_stay = 1.0 - p_up - p_down
    for arr in (p_up, p_down, p_stay):
        arr.setflags(write=False)
    return LumpedKernel(params, float(m0), p_up, p_down, p_stay)


@dataclass(frozen=True)
class LocalMoments:
    """Scaled one-step moments ``n E_eta[(Y - eta)^j]`` of the lumped chain."""

    eta: float
    drift: float
    second_moment: float
    jump_prob: float
    n: int

    def p_moment(self, p: float) -> float:
        if p < 2:
            raise DomainError("p_moment needs p >= 2")
        return self.n * (2.0 / np.sqrt(self.n)) ** p * self.jump_prob


def local_moments(kernel: LumpedKernel, k: int) -> LocalMoments:
    n = kernel.n
    if not 0 <= k <= n:
        raise DomainError(f"level k={k} outside [0, {n}]")
    up, down = float(kernel.p_up[k]), float(kernel.p_down[k])
    return LocalMoments(
        eta=float(kernel.eta[k]),
        drift=2.0 * np.sqrt(n) * (up - down),
        second_moment=4.0 * (up + down),
        jump_prob=up + down,
        n=n,
    )


@dataclass(frozen=True)
class MomentProfile:
    """Vectorized local moments over every level of a kernel."""

    eta: np.ndarray
    drift: np.ndarray
    second_moment: np.ndarray
    jump_prob: np.ndarray
    n: int

    def p_moment(self, p: float) -> np.ndarray:
        return self.n * (2.0 / np.sqrt(self.n)) ** p * self.jump_prob


def moment_profile(kernel: LumpedKernel) -> MomentProfile:
    n = kernel.n
    jump = kernel.p_up + kernel.p_down
    return MomentProfile(
        eta=kernel.eta,
        drift=2.0 * np.sqrt(n) * (kernel.p_up - kernel.p_down),
        second_moment=4.0 * jump,
        jump_prob=jump,
        n=n,
    )


def generator_apply(kernel: LumpedKernel, f: Callable, k=None, increment: Optional[Callable] = None):
    """Apply ``n (P f - f)`` at level(s) ``k`` (all levels when ``k`` is None).

    ``f`` must accept numpy arrays of eta values. ``increment(eta, s)``, when
    given, returns ``f(eta + s) - f(eta)`` in closed form and replaces the
    floating-point difference, which loses ``ulp(f) * n`` to cancellation.
    """
    n = kernel.n
    idx = kernel.k if k is None else np.asarray(k)
    eta = np.sqrt(n) * ((2 * idx - n) / n - kernel.m0)
    s = kernel.step
    if increment is None:
        f0 = np.asarray(f(eta), dtype=float)
        df_up = np.asarray(f(eta + s), dtype=float) - f0
        df_down = np.asarray(f(eta - s), dtype=float) - f0
    else:
        df_up = np.asarray(increment(eta, s), dtype=float)
        df_down = np.asarray(increment(eta, -s), dtype=float)
    out = n * (kernel.p_up[idx] * df_up + kernel.p_down[idx] * df_down)
    return float(out) if np.ndim(out) == 0 else out
