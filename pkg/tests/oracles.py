"""Independent reference computations used by the test-suite.

Nothing here imports the package under test.
"""

import itertools
import math

import mpmath
import numpy as np


def all_states(n):
    """Every configuration in {-1, +1}^n as an int array of shape (2^n, n)."""
    return np.array(list(itertools.product((-1, 1), repeat=n)), dtype=np.int64)


def pairwise_energy(x, h):
    """Energy from the double sum, ``-(1/2n) sum_ij x_i x_j - h sum_i x_i``."""
    x = np.asarray(x, dtype=float)
    n = x.size
    return -np.sum(np.outer(x, x)) / (2.0 * n) - h * x.sum()


def brute_force_level_law(n, beta, h):
    """Gibbs law lumped by up-spin count, summing over all 2^n states with mpmath."""
    states = all_states(n)
    weights = [mpmath.mpf(0)] * (n + 1)
    for x in states:
        k = int(np.sum(x == 1))
        weights[k] += mpmath.exp(-beta * mpmath.mpf(pairwise_energy(x, h)))
    z = mpmath.fsum(weights)
    return np.array([float(w / z) for w in weights])


def brute_force_state_law(n, beta, h):
    states = all_states(n)
    e = np.array([pairwise_energy(x, h) for x in states])
    w = np.exp(-beta * (e - e.min()))
    return states, w / w.sum()


def bisection_roots(beta, h, intervals=10_000, tol=1e-14):
    """Plain bisection on every sign change of ``m - tanh(beta (m + h))``."""
    g = lambda m: m - math.tanh(beta * (m + h))
    lo_edge, hi_edge = -1 + 1e-12, 1 - 1e-12
    xs = [lo_edge + (hi_edge - lo_edge) * i / intervals for i in range(intervals + 1)]
    roots = []
    for a, b in zip(xs, xs[1:]):
        ga, gb = g(a), g(b)
        if ga == 0:
            roots.append(a)
            continue
        if ga * gb > 0:
            continue
        while b - a > tol:
            mid = 0.5 * (a + b)
            if g(a) * g(mid) <= 0:
                b = mid
            else:
                a = mid
        roots.append(0.5 * (a + b))
    return roots


def fixed_point_root(beta, h, start=1.0, iters=10_000):
    m = start
    for _ in range(iters):
        m = math.tanh(beta * (m + h))
    return m


def mp_rate_function(m, beta, h, dps=50):
    with mpmath.workdps(dps):
        m = mpmath.mpf(m)
        return float(
            -(beta * m**2 / 2 + beta * h * m)
            + (1 - m) / 2 * mpmath.log(1 - m)
            + (1 + m) / 2 * mpmath.log(1 + m)
        )


def brute_force_mh_matrix(n, beta, h):
    """Full 2^n x 2^n Metropolis-Hastings matrix with uniform single-spin proposals."""
    states, pi = brute_force_state_law(n, beta, h)
    index = {tuple(s): i for i, s in enumerate(states)}
    size = len(states)
    P = np.zeros((size, size))
    for i, x in enumerate(states):
        for j in range(n):
            y = x.copy()
            y[j] = -y[j]
            t = index[tuple(y)]
            P[i, t] += (1.0 / n) * min(1.0, pi[t] / pi[i])
        P[i, i] = 1.0 - P[i].sum()
    return states, pi, P


def ou_stationary_variance_closed_form(beta, m0):
    """Classical CLT variance ``(1 - m0^2) / (1 - beta (1 - m0^2))``."""
    return (1 - m0**2) / (1 - beta * (1 - m0**2))
