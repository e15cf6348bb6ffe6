"""Distributions represented by their tail functions.

Everything downstream (construction, simulation, diagnostics) works through
``TailSpec``: a distribution is its tail ``x -> P{X > x}`` plus a generalized
inverse for sampling, an explicit atom list for mixed distributions, and
means computed by tail quadrature.  Builtin families cover the test bench:
shifted Weibull and lognormal (the intermediate heavy-tailed regime), Pareto
(regularly varying reference), two-point and constant increments, exponential
service times and service-minus-interarrival pairs.

Quantiles use the convention ``tail_quantile(q) = inf{x : tail(x) <= q}``;
``quantile(u) = tail_quantile(1 - u)`` so that one shared uniform applied to
two tail-ordered distributions yields ordered samples.
"""

from __future__ import annotations

import math
import warnings
from typing import Sequence

import numpy as np
from scipy import integrate, stats

__all__ = [
    "TailSpec",
    "TailError",
    "WeibullShifted",
    "LognormalShifted",
    "Pareto",
    "BernoulliPM1",
    "Constant",
    "Exponential",
    "QueuePair",
    "MajorantZeta",
    "MajorantIncrement",
    "SplicedTail",
    "TruncatedBelow",
    "ShiftedTail",
    "make_builtin_dist",
    "tail_table",
]

_QUAD_OPTS = dict(epsabs=1e-15, epsrel=1e-10, limit=200)
_TINY_TAIL = 1e-300


class TailError(ValueError):
    """Invalid distribution spec or non-integrable tail."""


def _quad(f, a, b) -> float:
    """scipy.quad with the module tolerances; roundoff chatter suppressed.

    Far-tail integrands sit at rounding-noise level by design; convergence is
    governed by the callers' own decay criteria and the closed-form checks in
    the test suite, so the library's roundoff warning carries no signal here.
    """
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        value, _ = integrate.quad(f, a, b, **_QUAD_OPTS)
    return value


def _doubling_tail_integral(f, start: float, direction: int = +1, rel_tol: float = 1e-13,
                            max_abs: float = 1e18) -> float:
    """Integrate f over [start, +inf) (or (-inf, start]) by geometric doubling.

    Stops once a doubling contributes less than rel_tol of the running total;
    raises TailError if no decay is seen before |x| = max_abs.
    """
    total = 0.0
    lo = start
    width = max(abs(start), 1.0)
    while abs(lo) < max_abs:
        hi = lo + direction * width
        a, b = (lo, hi) if direction > 0 else (hi, lo)
        part = _quad(f, a, b)
        total += part
        lo = hi
        width *= 2.0
        if abs(part) < rel_tol * max(abs(total), 1e-30) + 1e-300:
            return total
    raise TailError("tail integral did not converge (non-integrable tail?)")


class TailSpec:
    """Base distribution-by-tail. Subclasses fill in the family specifics.

    Attributes:
        support: (lo, hi) pair, extended reals.
        atoms: list of (location, mass) pairs for point masses.
        needs_pair: True when sampling consumes two uniforms per step.
    """

    needs_pair = False

    def __init__(self):
        self._mean_cache: float | None = None
        self._pos_mean_cache: float | None = None

    # -- interface ---------------------------------------------------------

    @property
    def support(self) -> tuple[float, float]:
        return (-math.inf, math.inf)

    @property
    def atoms(self) -> list[tuple[float, float]]:
        return []

    def tail(self, x):
        raise NotImplementedError

    def log_tail(self, x):
        with np.errstate(divide="ignore"):
            return np.log(self.tail(x))

    def tail_quantile(self, q):
        """inf{x : tail(x) <= q}; default is bracketed bisection on the tail."""
        return self._bisect_tail_quantile(q)

    def quantile(self, u):
        u = np.asarray(u, dtype=float)
        if np.any((u <= 0.0) | (u >= 1.0)):
            raise ValueError("quantile argument must lie strictly inside (0, 1)")
        return self.tail_quantile(1.0 - u)

    def increment_from_uniforms(self, u0, u1):
        """Map the per-step uniform pair to one increment (slot 1 unused here)."""
        return self.quantile(u0)

    def spec_dict(self) -> dict:
        raise NotImplementedError

    # -- means by quadrature -------------------------------------------------

    def _breakpoints(self) -> list[float]:
        lo, hi = self.support
        pts = [x for x, _ in self.atoms]
        if math.isfinite(lo):
            pts.append(lo)
        if math.isfinite(hi):
            pts.append(hi)
        return sorted(set(pts))

    def _integrate_tail(self, a: float, b: float) -> float:
        """Integral of the tail over [a, b], split at breakpoints."""
        knots = [p for p in self._breakpoints() if a < p < b]
        edges = [a] + knots + [b]
        total = 0.0
        for left, right in zip(edges[:-1], edges[1:]):
            total += _quad(lambda x: self.tail(x), left, right)
        return total

    def _integrate_cdf(self, a: float, b: float) -> float:
        knots = [p for p in self._breakpoints() if a < p < b]
        edges = [a] + knots + [b]
        total = 0.0
        for left, right in zip(edges[:-1], edges[1:]):
            total += _quad(lambda x: 1.0 - self.tail(x), left, right)
        return total

    @property
    def pos_mean(self) -> float:
        """Mean of the positive part, integral of the tail over (0, inf)."""
        if self._pos_mean_cache is None:
            lo, hi = self.support
            if hi <= 0:
                self._pos_mean_cache = 0.0
            else:
                edge = max([p for p in self._breakpoints() if p > 0], default=1.0)
                body = self._integrate_tail(0.0, max(edge, 1.0))
                if math.isfinite(hi):
                    tail_part = self._integrate_tail(max(edge, 1.0), hi) if hi > max(edge, 1.0) else 0.0
                else:
                    tail_part = _doubling_tail_integral(lambda x: self.tail(x), max(edge, 1.0))
                self._pos_mean_cache = body + tail_part
        return self._pos_mean_cache

    @property
    def mean(self) -> float:
        if self._mean_cache is None:
            lo, _ = self.support
            if lo >= 0:
                neg = 0.0
            elif math.isfinite(lo):
                neg = self._integrate_cdf(lo, 0.0)
            else:
                edge = min([p for p in self._breakpoints() if p < 0], default=-1.0)
                neg = self._integrate_cdf(min(edge, -1.0), 0.0) + _doubling_tail_integral(
                    lambda x: 1.0 - self.tail(x), min(edge, -1.0), direction=-1
                )
            self._mean_cache = self.pos_mean - neg
        return self._mean_cache

    # -- generic quantile ----------------------------------------------------

    def _bisect_tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        scalar = q.ndim == 0
        qa = np.atleast_1d(q).astype(float)
        lo_s, hi_s = self.support
        lo = np.full_like(qa, lo_s if math.isfinite(lo_s) else -1.0)
        hi = np.full_like(qa, hi_s if math.isfinite(hi_s) else 1.0)
        if not math.isfinite(lo_s):
            for _ in range(200):
                need = self.tail(lo) <= qa  # lo must stay on the tail > q side
                if not need.any():
                    break
                lo = np.where(need, lo * 2.0 - 1.0, lo)
        if not math.isfinite(hi_s):
            for _ in range(200):
                need = self.tail(hi) > qa
                if not need.any():
                    break
                hi = np.where(need, hi * 2.0 + 1.0, hi)
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            le = self.tail(mid) <= qa
            hi = np.where(le, mid, hi)
            lo = np.where(le, lo, mid)
            if np.all((hi - lo) <= np.maximum(1e-12, 8.0 * np.spacing(np.abs(hi)))):
                break
        out = hi
        return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# Builtin families
# ---------------------------------------------------------------------------


class WeibullShifted(TailSpec):
    """Tail min(1, c * exp(-((x - shift)^+)^beta)), an atom of 1-c at the shift for c < 1."""

    def __init__(self, c: float, beta: float, shift: float = 0.0):
        super().__init__()
        if c <= 0:
            raise TailError("weibull_shifted needs c > 0")
        if not 0 < beta < 1:
            raise TailError("weibull_shifted needs beta in (0, 1)")
        self.c, self.beta, self.shift = float(c), float(beta), float(shift)

    @property
    def support(self):
        lo = self.shift if self.c <= 1 else self.shift + math.log(self.c) ** (1.0 / self.beta)
        return (lo, math.inf)

    @property
    def atoms(self):
        return [(self.shift, 1.0 - self.c)] if self.c < 1 else []

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.shift, 0.0)
        out = np.minimum(1.0, self.c * np.exp(-(t**self.beta)))
        return np.where(x < self.shift, 1.0, out)

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.shift, 0.0)
        out = np.minimum(0.0, math.log(self.c) - t**self.beta)
        return np.where(x < self.shift, 0.0, out)

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        with np.errstate(divide="ignore"):
            arg = np.maximum(np.log(self.c / q), 0.0)
        return self.shift + arg ** (1.0 / self.beta)

    def spec_dict(self):
        return {"family": "weibull_shifted", "c": self.c, "beta": self.beta, "shift": self.shift}


class LognormalShifted(TailSpec):
    """shift + LogNormal(mu, sigma2)."""

    def __init__(self, mu: float, sigma2: float, shift: float = 0.0):
        super().__init__()
        if sigma2 <= 0:
            raise TailError("lognormal_shifted needs sigma2 > 0")
        self.mu, self.sigma2, self.shift = float(mu), float(sigma2), float(shift)
        self._sigma = math.sqrt(self.sigma2)

    @property
    def support(self):
        return (self.shift, math.inf)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.shift, _TINY_TAIL)
        z = (np.log(t) - self.mu) / self._sigma
        return np.where(x <= self.shift, 1.0, stats.norm.sf(z))

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum(x - self.shift, _TINY_TAIL)
        z = (np.log(t) - self.mu) / self._sigma
        return np.where(x <= self.shift, 0.0, stats.norm.logsf(z))

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return self.shift + np.exp(self.mu + self._sigma * stats.norm.isf(q))

    def spec_dict(self):
        return {"family": "lognormal_shifted", "mu": self.mu, "sigma2": self.sigma2, "shift": self.shift}


class Pareto(TailSpec):
    """shift + Pareto(index, scale): tail ((x - shift)/scale)^(-index) beyond scale."""

    def __init__(self, index: float, scale: float, shift: float = 0.0):
        super().__init__()
        if index <= 0 or scale <= 0:
            raise TailError("pareto needs index > 0 and scale > 0")
        self.index, self.scale, self.shift = float(index), float(scale), float(shift)

    @property
    def support(self):
        return (self.shift + self.scale, math.inf)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum((x - self.shift) / self.scale, 1.0)
        return t ** (-self.index)

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        t = np.maximum((x - self.shift) / self.scale, 1.0)
        return -self.index * np.log(t)

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return self.shift + self.scale * q ** (-1.0 / self.index)

    def spec_dict(self):
        return {"family": "pareto", "index": self.index, "scale": self.scale, "shift": self.shift}


class _AtomicTail(TailSpec):
    """Distribution carried entirely by finitely many atoms."""

    def __init__(self, atom_list: Sequence[tuple[float, float]]):
        super().__init__()
        atom_list = sorted((float(x), float(m)) for x, m in atom_list if m > 0)
        total = sum(m for _, m in atom_list)
        if abs(total - 1.0) > 1e-12:
            raise TailError("atom masses must sum to one")
        self._atoms = atom_list
        self._locs = np.array([x for x, _ in atom_list])
        # tail just left of each atom, i.e. P{X >= loc_i}
        masses = np.array([m for _, m in atom_list])
        self._tail_from = np.concatenate([np.cumsum(masses[::-1])[::-1], [0.0]])

    @property
    def support(self):
        return (self._locs[0], self._locs[-1])

    @property
    def atoms(self):
        return list(self._atoms)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self._locs, x, side="right")
        return self._tail_from[idx]

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        # smallest atom whose "tail from here" is <= q
        idx = np.searchsorted(-self._tail_from[1:], -q, side="left")
        idx = np.minimum(idx, len(self._locs) - 1)
        return self._locs[idx]

    @property
    def pos_mean(self):
        return float(sum(m * max(x, 0.0) for x, m in self._atoms))

    @property
    def mean(self):
        return float(sum(m * x for x, m in self._atoms))


class BernoulliPM1(_AtomicTail):
    """P{+1} = p, P{-1} = 1 - p."""

    def __init__(self, p: float):
        if not 0 <= p <= 1:
            raise TailError("bernoulli_pm1 needs p in [0, 1]")
        self.p = float(p)
        atom_list = [(-1.0, 1.0 - self.p), (1.0, self.p)]
        super().__init__(atom_list)

    def spec_dict(self):
        return {"family": "bernoulli_pm1", "p": self.p}


class Constant(_AtomicTail):
    """Point mass at a single value."""

    def __init__(self, value: float):
        self.value = float(value)
        super().__init__([(self.value, 1.0)])

    def spec_dict(self):
        return {"family": "constant", "value": self.value}


class Exponential(TailSpec):
    """Exponential with the given mean, supported on [0, inf)."""

    def __init__(self, mean: float):
        super().__init__()
        if mean <= 0:
            raise TailError("exponential needs mean > 0")
        self.mean_param = float(mean)

    @property
    def support(self):
        return (0.0, math.inf)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 1.0, np.exp(-np.maximum(x, 0.0) / self.mean_param))

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < 0, 0.0, -np.maximum(x, 0.0) / self.mean_param)

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return -self.mean_param * np.log(q)

    def spec_dict(self):
        return {"family": "exponential", "mean": self.mean_param}


class QueuePair(TailSpec):
    """Service-minus-interarrival increment sigma - t with independent parts.

    Sampling consumes a pair of uniforms per step (one per component), which
    makes the single-server waiting-time recursion and the random-walk view
    agree path by path under a shared random source.  The composite tail is
    exact when the interarrival part is atomic, otherwise it is computed by
    fixed-order Gauss-Legendre over the interarrival quantile.
    """

    needs_pair = True
    _GL_NODES = 256

    def __init__(self, sigma: TailSpec, t: TailSpec):
        super().__init__()
        if sigma.support[0] < 0 or t.support[0] < 0:
            raise TailError("queue_pair components must be non-negative")
        self.sigma, self.t = sigma, t
        nodes, weights = np.polynomial.legendre.leggauss(self._GL_NODES)
        self._v = 0.5 * (nodes + 1.0)
        self._w = 0.5 * weights

    @property
    def support(self):
        s_lo, s_hi = self.sigma.support
        t_lo, t_hi = self.t.support
        return (s_lo - t_hi, s_hi - t_lo)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        if self.t.atoms and abs(sum(m for _, m in self.t.atoms) - 1.0) < 1e-12:
            out = np.zeros_like(x, dtype=float)
            for loc, mass in self.t.atoms:
                out += mass * self.sigma.tail(x + loc)
            return out
        tq = self.t.quantile(self._v)
        return np.tensordot(self.sigma.tail(x[..., None] + tq), self._w, axes=([-1], [0]))

    def increment_from_uniforms(self, u0, u1):
        return self.sigma.quantile(u0) - self.t.quantile(u1)

    @property
    def mean(self):
        return self.sigma.mean - self.t.mean

    def spec_dict(self):
        return {"family": "queue_pair", "sigma": self.sigma.spec_dict(), "t": self.t.spec_dict()}


# ---------------------------------------------------------------------------
# Constructed tails (majorants, splice, truncation, shift)
# ---------------------------------------------------------------------------


class MajorantZeta(TailSpec):
    """Non-negative majorant with tail min(1, K/x); infinite mean by design."""

    def __init__(self, K: float):
        super().__init__()
        if K <= 0:
            raise TailError("majorant coefficient must be positive")
        self.K = float(K)

    @property
    def support(self):
        return (self.K, math.inf)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            return np.where(x <= 0, 1.0, np.minimum(1.0, self.K / x))

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return self.K / q

    def spec_dict(self):
        return {"family": "majorant_zeta", "K": self.K}


class MajorantIncrement(TailSpec):
    """Dominating increment with tail min(1, K exp(-g(x)))."""

    def __init__(self, g, K: float):
        super().__init__()
        if K < 1.0:
            raise TailError("majorant coefficient must be >= 1 for a proper tail")
        self.g, self.K = g, float(K)
        self._ln_k = math.log(self.K)
        self._lo = float(self.g.inverse(self._ln_k))

    @property
    def support(self):
        return (self._lo, math.inf)

    def tail(self, x):
        return np.exp(self.log_tail(x))

    def log_tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.minimum(0.0, self._ln_k - self.g(x))

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return self.g.inverse(self._ln_k - np.log(q))

    def spec_dict(self):
        return {"family": "majorant_increment", "growth": self.g.spec_dict(), "K": self.K}


class SplicedTail(TailSpec):
    """Base tail below V, flat on [V, V'), majorant tail from V' on."""

    def __init__(self, base: TailSpec, hat: MajorantIncrement, v: float, v_prime: float):
        super().__init__()
        self.base, self.hat = base, hat
        self.v, self.v_prime = float(v), float(v_prime)
        self._q_v = float(base.tail(self.v))

    @property
    def support(self):
        return (self.base.support[0], math.inf if self._q_v > 0 else self.base.support[1])

    @property
    def atoms(self):
        return [(x, m) for x, m in self.base.atoms if x <= self.v]

    def _breakpoints(self):
        pts = set(super()._breakpoints())
        pts.add(self.v)
        if math.isfinite(self.v_prime):
            pts.add(self.v_prime)
        return sorted(pts)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        flat_or_hat = np.where(x < self.v_prime, self._q_v, self.hat.tail(x))
        return np.where(x < self.v, self.base.tail(x), flat_or_hat)

    def tail_quantile(self, q):
        q = np.asarray(q, dtype=float)
        return np.where(q > self._q_v, self.base.tail_quantile(q), self.hat.tail_quantile(q))

    def spec_dict(self):
        return {
            "family": "spliced",
            "base": self.base.spec_dict(),
            "hat": self.hat.spec_dict(),
            "V": self.v,
            "V_prime": self.v_prime,
        }


class TruncatedBelow(TailSpec):
    """max(X, -L): the lower tail collapses into an atom at -L."""

    def __init__(self, base: TailSpec, level: float):
        super().__init__()
        self.base, self.level = base, float(level)
        self._floor = -self.level
        self._atom_mass = float(1.0 - base.tail(self._floor)) + float(
            sum(m for x, m in base.atoms if x == self._floor)
        )

    @property
    def support(self):
        return (max(self._floor, self.base.support[0]), self.base.support[1])

    @property
    def atoms(self):
        kept = [(x, m) for x, m in self.base.atoms if x > self._floor]
        if self._atom_mass > 0 and self._floor >= self.base.support[0]:
            kept.append((self._floor, self._atom_mass))
        return sorted(kept)

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self._floor, 1.0, self.base.tail(x))

    def tail_quantile(self, q):
        return np.maximum(self.base.tail_quantile(q), self._floor)

    def spec_dict(self):
        return {"family": "truncated_below", "base": self.base.spec_dict(), "L": self.level}


class ShiftedTail(TailSpec):
    """X + offset; used for drift-compensated increments."""

    def __init__(self, base: TailSpec, offset: float):
        super().__init__()
        self.base, self.offset = base, float(offset)

    @property
    def support(self):
        lo, hi = self.base.support
        return (lo + self.offset, hi + self.offset)

    @property
    def atoms(self):
        return [(x + self.offset, m) for x, m in self.base.atoms]

    def tail(self, x):
        return self.base.tail(np.asarray(x, dtype=float) - self.offset)

    def log_tail(self, x):
        return self.base.log_tail(np.asarray(x, dtype=float) - self.offset)

    def tail_quantile(self, q):
        return self.base.tail_quantile(q) + self.offset

    @property
    def mean(self):
        return self.base.mean + self.offset

    def spec_dict(self):
        return {"family": "shifted", "base": self.base.spec_dict(), "offset": self.offset}


# ---------------------------------------------------------------------------
# Config dispatch
# ---------------------------------------------------------------------------

_DIST_BUILDERS = {
    "weibull_shifted": lambda s: WeibullShifted(s["c"], s["beta"], s.get("shift", 0.0)),
    "lognormal_shifted": lambda s: LognormalShifted(s["mu"], s["sigma2"], s.get("shift", 0.0)),
    "pareto": lambda s: Pareto(s["index"], s["scale"], s.get("shift", 0.0)),
    "bernoulli_pm1": lambda s: BernoulliPM1(s["p"]),
    "constant": lambda s: Constant(s["value"]),
    "exponential": lambda s: Exponential(s["mean"]),
    "majorant_zeta": lambda s: MajorantZeta(s["K"]),
}


def make_builtin_dist(spec: dict) -> TailSpec:
    """Build a distribution from its tagged config record."""
    family = spec.get("family")
    if family == "queue_pair":
        return QueuePair(make_builtin_dist(spec["sigma"]), make_builtin_dist(spec["t"]))
    try:
        builder = _DIST_BUILDERS[family]
    except KeyError:
        raise TailError(f"unknown distribution family {family!r}") from None
    return builder(spec)


def tail_table(specs: dict[str, TailSpec], xs) -> list[list]:
    """Rows (x, tail_1(x), tail_2(x), ...) for CSV export and plotting."""
    xs = np.asarray(xs, dtype=float)
    columns = [spec.tail(xs) for spec in specs.values()]
    header = ["x"] + list(specs.keys())
    rows: list[list] = [header]
    for i, x in enumerate(xs):
        rows.append([float(x)] + [float(col[i]) for col in columns])
    return rows
