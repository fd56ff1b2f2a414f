"""Stochastic engines for the Curie-Weiss dynamics and its diffusion limit.

Every engine takes a ``numpy.random.Generator``; build one from an
:class:`RngSpec` so that ``(seed, stream_id)`` pins the path bit-for-bit.
Engines are single-threaded per path; :func:`run_ensemble` spreads paths over
a thread pool with one substream each.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Callable, Optional

import numpy as np
from scipy.signal import lfilter

from .exceptions import DomainError
from .lumped_kernel import LumpedKernel, _log_acceptance
from .model_core import ModelParams, SpinState, exact_distribution, solve_cw_roots

if TYPE_CHECKING:
    from .diagnostics import OUParams

__all__ = [
    "RngSpec",
    "PathSample",
    "PATH_KINDS",
    "mh_step",
    "run_spin_chain",
    "run_lumped_chain",
    "run_ctmc",
    "ou_step",
    "run_ou",
    "run_ensemble",
]

PATH_KINDS = ("lumpedDTMC", "ctmcRateN", "ouExact", "spinMH")

# Bitmask codes of full configurations are recorded only up to this size.
_MAX_CODE_N = 62


@dataclass(frozen=True)
class RngSpec:
    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(entropy=int(self.seed), spawn_key=(int(self.stream_id),))
        return np.random.Generator(np.random.PCG64(seq))


@dataclass
class PathSample:
    """A recorded sample path.

    ``values`` holds eta (or the OU state); ``levels`` the up-spin counts for
    the lattice engines; ``codes`` the bitmask of the full configuration for
    the spin engine when ``n`` is small enough.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str
    levels: Optional[np.ndarray] = None
    codes: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in PATH_KINDS:
            raise DomainError(f"unknown path kind {self.kind!r}")
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.times.shape != self.values.shape:
            raise DomainError("times and values must have equal length")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise DomainError("times must be strictly increasing")

    def __len__(self):
        return self.times.size

    @property
    def horizon(self) -> float:
        return float(self.times[-1]) if self.times.size else 0.0

    def value_at(self, t):
        """Evaluate the right-continuous step path at time(s) ``t``."""
        idx = np.searchsorted(self.times, t, side="right") - 1
        return self.values[np.clip(idx, 0, None)]

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "value"])
            for t, v in zip(self.times, self.values):
                writer.writerow([repr(float(t)), repr(float(v))])

    def summary(self) -> dict:
        v = self.values
        return {
            "kind": self.kind,
            "length": int(v.size),
            "horizon": self.horizon,
            "mean": float(v.mean()),
            "variance": float(v.var()),
            "min": float(v.min()),
            "max": float(v.max()),
        }


def mh_step(state: SpinState, params: ModelParams, rng: np.random.Generator) -> SpinState:
    """One Metropolis-Hastings update: pick a spin uniformly and try to flip it."""
    n = params.n
    if state.n != n:
        raise DomainError(f"state has {state.n} spins but params.n = {n}")
    i = int(rng.integers(n))
    u = rng.random()
    s = int(state.spins[i])
    m = state.magnetization
    m_new = m - 2.0 * s / n
    # -beta * dH, using only the magnetization change
    log_ratio = params.beta * n * (m_new - m) * (0.5 * (m_new + m) + params.h)
    if log_ratio >= 0 or u < math.exp(log_ratio):
        spins = state.spins.copy()
        spins[i] = -s
        return SpinState(spins, state.up_count - s)
    return state


def _initial_level(params, start, rng):
    if isinstance(start, str):
        if start == "stationary":
            return int(exact_distribution(params).sample_levels(rng))
        if start == "cold":
            return params.n
        raise DomainError(f"unknown start {start!r}; use 'stationary', 'cold' or a level")
    k = int(start)
    if not 0 <= k <= params.n:
        raise DomainError(f"start level {k} outside [0, {params.n}]")
    return k


def run_spin_chain(
    params: ModelParams,
    steps: int,
    rng: np.random.Generator,
    record_every: int = 1,
    start="stationary",
    m0: Optional[float] = None,
) -> PathSample:
    """Run the full-configuration MH chain and record eta every ``record_every`` steps.

    ``start`` is ``"stationary"`` (level drawn from the exact law, positions
    uniformly), ``"cold"`` (all spins up), an integer level, or a
    :class:`SpinState`.
    """
    if steps < 1 or record_every < 1:
        raise DomainError("steps and record_every must be positive")
    n = params.n
    if m0 is None:
        m0 = solve_cw_roots(params).m0

    if isinstance(start, SpinState):
        if start.n != n:
            raise DomainError("start state has the wrong size")
        spins = start.spins.astype(np.int64).tolist()
    else:
        k0 = _initial_level(params, start, rng)
        arr = -np.ones(n, dtype=np.int64)
        arr[rng.permutation(n)[:k0]] = 1
        spins = arr.tolist()

    acc_up, acc_down = _log_acceptance(params)
    acc_up = acc_up.tolist()  # flip a down spin: k -> k + 1
    acc_down = acc_down.tolist()  # flip an up spin: k -> k - 1

    track_code = n <= _MAX_CODE_N
    k = sum(1 for s in spins if s == 1)
    code = sum(1 << i for i, s in enumerate(spins) if s == 1) if track_code else 0

    n_rec = steps // record_every + 1
    levels = np.empty(n_rec, dtype=np.int64)
    codes = np.empty(n_rec, dtype=np.int64) if track_code else None
    levels[0] = k
    if track_code:
        codes[0] = code

    chunk = 1 << 16
    done = 0
    rec = 1
    while done < steps:
        size = min(chunk, steps - done)
        picks = rng.integers(n, size=size).tolist()
        us = rng.random(size).tolist()
        for j in range(size):
            i = picks[j]
            if spins[i] == 1:
                if us[j] < acc_down[k]:
                    spins[i] = -1
                    k -= 1
                    code ^= 1 << i
            elif us[j] < acc_up[k]:
                spins[i] = 1
                k += 1
                code ^= 1 << i
            done += 1
            if done % record_every == 0:
                levels[rec] = k
                if track_code:
                    codes[rec] = code
                rec += 1

    times = np.arange(n_rec, dtype=float) * record_every
    values = np.sqrt(n) * ((2 * levels - n) / n - m0)
    return PathSample(
        times,
        values,
        "spinMH",
        levels=levels,
        codes=codes,
        meta={"n": n, "beta": params.beta, "h": params.h, "m0": m0, "record_every": record_every},
    )


def _jump_chain(kernel: LumpedKernel, k0: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """Levels visited by ``size`` steps of the lumped DTMC (including the start)."""
    p_down = kernel.p_down.tolist()
    p_move = (kernel.p_down + kernel.p_up).tolist()
    us = rng.random(size).tolist()
    out = [0] * (size + 1)
    k = k0
    out[0] = k
    for j in range(size):
        u = us[j]
        if u < p_down[k]:
            k -= 1
        elif u < p_move[k]:
            k += 1
        out[j + 1] = k
    return np.asarray(out, dtype=np.int64)


def run_lumped_chain(
    kernel: LumpedKernel,
    steps: int,
    rng: np.random.Generator,
    start="stationary",
    record_every: int = 1,
) -> PathSample:
    """Discrete-time birth-death chain on the levels, one kernel step per tick."""
    if steps < 1 or record_every < 1:
        raise DomainError("steps and record_every must be positive")
    k0 = _initial_level(kernel.params, start, rng)
    levels = _jump_chain(kernel, k0, steps, rng)[::record_every]
    times = np.arange(levels.size, dtype=float) * record_every
    values = kernel.eta[levels]
    return PathSample(times, values, "lumpedDTMC", levels=levels, meta={"n": kernel.n, "m0": kernel.m0})


def run_ctmc(
    kernel: LumpedKernel,
    horizon: float,
    rng: np.random.Generator,
    start="stationary",
) -> PathSample:
    """Continuous-time chain ticking at rate ``n``; each tick applies the kernel once.

    Self-loop ticks are kept as events, so the event clock is exactly Poisson
    with rate ``n``. The returned path holds the state right after each event.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    n = kernel.n
    k0 = _initial_level(kernel.params, start, rng)

    expected = n * horizon
    pieces = []
    total = 0.0
    while total <= horizon:
        draw = rng.exponential(1.0 / n, size=max(16, int(expected + 6 * math.sqrt(expected) + 16)))
        pieces.append(draw)
        total += draw.sum()
    holding = np.concatenate(pieces)
    event_times = np.cumsum(holding)
    n_events = int(np.searchsorted(event_times, horizon, side="right"))
    holding = holding[:n_events]
    event_times = event_times[:n_events]

    levels = _jump_chain(kernel, k0, n_events, rng)
    times = np.concatenate(([0.0], event_times))
    return PathSample(
        times,
        kernel.eta[levels],
        "ctmcRateN",
        levels=levels,
        meta={"n": n, "m0": kernel.m0, "horizon": float(horizon), "holding_times": holding},
    )


def _ou_coefficients(dt: float, ou) -> tuple:
    if not ou.ell > 0:
        raise DomainError(f"OU mean reversion needs ell > 0, got {ou.ell}")
    if not dt > 0:
        raise DomainError("dt must be positive")
    decay = math.exp(-2.0 * ou.ell * dt)
    scale = math.sqrt(ou.sigma**2 * -math.expm1(-4.0 * ou.ell * dt) / (4.0 * ou.ell))
    return decay, scale


def ou_step(y: float, dt: float, ou: "OUParams", rng: np.random.Generator) -> float:
    """Exact transition of ``dY = -2 ell Y dt + sigma dB`` over time ``dt``."""
    decay, scale = _ou_coefficients(dt, ou)
    return y * decay + scale * rng.standard_normal()


def run_ou(
    ou: "OUParams",
    horizon: float,
    dt: float,
    rng: np.random.Generator,
    y0: Optional[float] = None,
) -> PathSample:
    """Exact OU path on a uniform grid; stationary start when ``y0`` is None."""
    decay, scale = _ou_coefficients(dt, ou)
    steps = int(round(horizon / dt))
    if steps < 1:
        raise DomainError("horizon must cover at least one step")
    if y0 is None:
        y0 = math.sqrt(ou.stationary_variance) * rng.standard_normal()
    z = scale * rng.standard_normal(steps)
    tail, _ = lfilter([1.0], [1.0, -decay], z, zi=[decay * y0])
    values = np.concatenate(([y0], tail))
    times = np.arange(steps + 1, dtype=float) * dt
    return PathSample(times, values, "ouExact", meta={"dt": dt, "ell": ou.ell, "sigma": ou.sigma})


def run_ensemble(
    engine: Callable[[np.random.Generator], PathSample],
    n_paths: int,
    seed: int,
    workers: int = 1,
) -> list:
    """Run ``engine`` once per substream ``0..n_paths-1``; results are in stream order."""
    rngs = [RngSpec(seed, i).generator() for i in range(n_paths)]
    if workers <= 1:
        return [engine(r) for r in rngs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(engine, rngs))
