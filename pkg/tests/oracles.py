"""Independent oracles for the test suite.

These are deliberately separate from the library code paths they check:
an exhaustive level-occupation recursion for the two-point walk, and closed
forms for the integrals the quadrature routines must reproduce.
"""

from __future__ import annotations

import math

import numpy as np


def bernoulli_descent_pmf(p: float, depth: int) -> np.ndarray:
    """Exact P{tau = n} for n = 1..depth for the +1/-1 walk with P{+1} = p.

    Dynamic program over the occupation probabilities of positive levels:
    from level l the walk rises to l+1 with probability p or falls to l-1
    with probability 1-p, stopping when it reaches level zero (partial sum
    <= 0).  The leftover alive mass at `depth` must be negligible for the
    pmf to be usable as a moment oracle; callers should check `sum` closeness
    to one.
    """
    q = 1.0 - p
    pmf = np.zeros(depth + 1)
    alive = np.zeros(depth + 2)  # alive[l]: at current step, S = l > 0 unstopped
    pmf[1] = q
    alive[1] = p
    for n in range(2, depth + 1):
        nxt = np.zeros_like(alive)
        nxt[2:] = p * alive[1:-1]
        nxt[1:-1] += q * alive[2:]
        pmf[n] = q * alive[1]
        alive = nxt
    return pmf[1:]


def bernoulli_descent_moment(p: float, fn, depth: int = 4000) -> float:
    """Sum of fn(n) P{tau = n}; requires the alive remainder to be negligible."""
    pmf = bernoulli_descent_pmf(p, depth)
    leftover = 1.0 - pmf.sum()
    if not leftover < 1e-12:
        raise ValueError(f"enumeration depth {depth} leaves {leftover} unstopped mass")
    ns = np.arange(1, depth + 1, dtype=float)
    return float(np.sum(pmf * fn(ns)))


def weibull_exp_tail_integral(c: float) -> float:
    """Closed form of the integral of exp(-c sqrt(x)) over [1, inf)."""
    return 2.0 * (c + 1.0) / (c * c) * math.exp(-c)


def exponential_self_convolution_ratio(x: float, mean: float = 1.0) -> float:
    """For the exponential tail the class ratio is exactly x / (2 m)."""
    return x / (2.0 * mean)
