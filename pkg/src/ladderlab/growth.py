"""Growth functions and the numerical certification of their admissibility.

A growth function g is the exponent scale of an intermediate-moment family
``x -> exp(g(x))``: positive, increasing, flattening out (derivative dying at
infinity) and with sub-linear increments.  Three builtin families are
provided,

* ``g1``: powers of the logarithm, ``(log max(x,1))**alpha`` with alpha > 1
  (lognormal-type tails),
* ``g2``: fractional powers, ``max(x,0)**beta`` with beta in (0,1)
  (Weibull-type tails),
* ``g3``: fractional power times logarithm, ``max(x,0)**beta *
  log(max(x,1))``,

plus tabulated functions (piecewise-linear, monotone) for user-supplied data.

``certify`` runs the four numerical checks and fits the admissibility
constants: the slope threshold ``x0`` and bound ``B``, the increment weight
``gamma`` and the additive slack ``A``.  All verdicts are finite-range
statements: they certify the inequalities on explicit grids up to ``x_max``,
never beyond.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

__all__ = [
    "GrowthFunction",
    "GrowthEvalError",
    "ConditionReport",
    "make_builtin",
    "make_growth",
    "from_callables",
    "default_condition_grid",
    "check_shape",
    "check_slope_decay",
    "check_tail_integral",
    "check_increment_slack",
    "certify",
]

INCREMENT_X_MAX = 1e8
INTEGRAL_X_MAX = 1e12
GAMMA_CANDIDATES = tuple(round(0.05 * k, 2) for k in range(1, 20))


class GrowthEvalError(ValueError):
    """A growth function produced a non-finite value."""


def _bisect_increasing(fn, targets, lo, atol=1e-12):
    """Generalized inverse of an increasing fn by bracketed bisection.

    Returns x with fn(x) ~= target; targets may be an array.  The bracket is
    grown geometrically from `lo`; the iteration stops when the bracket width
    falls below `atol` or below a few ulps of the abscissa, whichever is
    larger.
    """
    t = np.asarray(targets, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    lo_arr = np.full_like(t, float(lo))
    hi = np.maximum(lo_arr * 2.0, lo_arr + 1.0)
    for _ in range(200):
        need = fn(hi) <= t
        if not need.any():
            break
        hi = np.where(need, hi * 4.0, hi)
    else:
        raise GrowthEvalError("could not bracket inverse: target too large")
    lo_arr = lo_arr.copy()
    for _ in range(200):
        mid = 0.5 * (lo_arr + hi)
        high_side = fn(mid) > t
        hi = np.where(high_side, mid, hi)
        lo_arr = np.where(high_side, lo_arr, mid)
        width = hi - lo_arr
        if np.all(width <= np.maximum(atol, 4.0 * np.spacing(hi))):
            break
    out = 0.5 * (lo_arr + hi)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class GrowthFunction:
    """A growth function with derivative and generalized inverse.

    The inverse follows the convention inf{x : g(x) > t}, so it is defined for
    every t >= 0 even where g has flat stretches.  All three callables accept
    and return numpy arrays.
    """

    family: str
    params: dict
    _eval: Callable
    _deriv: Callable
    _inverse: Callable

    def __call__(self, x):
        return self._eval(np.asarray(x, dtype=float))

    def deriv(self, x):
        return self._deriv(np.asarray(x, dtype=float))

    def inverse(self, t):
        return self._inverse(np.asarray(t, dtype=float))

    def spec_dict(self) -> dict:
        if self.family == "table":
            return {"family": "table", "points": self.params["points"]}
        return {"family": self.family, "param": self.params["param"]}


def _make_g1(alpha: float) -> GrowthFunction:
    if not alpha > 1:
        raise ValueError(f"g1 needs alpha > 1, got {alpha}")

    def ev(x):
        return np.log(np.maximum(x, 1.0)) ** alpha

    def dv(x):
        x = np.maximum(x, 1.0)
        with np.errstate(divide="ignore"):
            out = alpha * np.log(x) ** (alpha - 1.0) / x
        return np.where(x > 1.0, out, 0.0)

    def inv(t):
        t = np.maximum(t, 0.0)
        return np.exp(t ** (1.0 / alpha))

    return GrowthFunction("g1", {"param": alpha}, ev, dv, inv)


def _make_g2(beta: float) -> GrowthFunction:
    if not 0 < beta < 1:
        raise ValueError(f"g2 needs beta in (0,1), got {beta}")

    def ev(x):
        return np.maximum(x, 0.0) ** beta

    def dv(x):
        xp = np.maximum(x, 0.0)
        with np.errstate(divide="ignore"):
            out = beta * xp ** (beta - 1.0)
        return np.where(xp > 0.0, out, 0.0)

    def inv(t):
        return np.maximum(t, 0.0) ** (1.0 / beta)

    return GrowthFunction("g2", {"param": beta}, ev, dv, inv)


def _make_g3(beta: float) -> GrowthFunction:
    if not 0 < beta < 1:
        raise ValueError(f"g3 needs beta in (0,1), got {beta}")

    def ev(x):
        xp = np.maximum(x, 0.0)
        return xp**beta * np.log(np.maximum(x, 1.0))

    def dv(x):
        xg = np.maximum(x, 1.0)
        out = xg ** (beta - 1.0) * (beta * np.log(xg) + 1.0)
        return np.where(np.asarray(x, dtype=float) > 1.0, out, 0.0)

    def inv(t):
        # No closed form: bracketed bisection above the flat region [., 1].
        return _bisect_increasing(ev, t, lo=1.0)

    return GrowthFunction("g3", {"param": beta}, ev, dv, inv)


def _make_table(points: Sequence[Sequence[float]]) -> GrowthFunction:
    pts = sorted((float(x), float(y)) for x, y in points)
    if len(pts) < 2:
        raise ValueError("table growth function needs at least two points")
    xs = np.array([p[0] for p in pts])
    ys = np.array([p[1] for p in pts])
    if np.any(np.diff(xs) <= 0):
        raise ValueError("table abscissae must be strictly increasing")
    if np.any(np.diff(ys) < 0):
        raise ValueError("table ordinates must be non-decreasing")
    slopes = np.diff(ys) / np.diff(xs)

    def ev(x):
        x = np.asarray(x, dtype=float)
        inside = np.interp(x, xs, ys)
        below = ys[0] + (x - xs[0]) * slopes[0]
        above = ys[-1] + (x - xs[-1]) * slopes[-1]
        return np.where(x < xs[0], below, np.where(x > xs[-1], above, inside))

    def dv(x):
        x = np.asarray(x, dtype=float)
        idx = np.clip(np.searchsorted(xs, x, side="right") - 1, 0, len(slopes) - 1)
        return slopes[idx]

    def inv(t):
        lo = xs[0] if slopes[0] > 0 else xs[0] - 1.0
        return _bisect_increasing(ev, t, lo=min(lo, 1e-6))

    return GrowthFunction("table", {"points": [list(p) for p in pts]}, ev, dv, inv)


_FAMILIES = {"g1": _make_g1, "g2": _make_g2, "g3": _make_g3}


def make_builtin(family: str, param: float) -> GrowthFunction:
    """Build one of the closed-form families g1/g2/g3."""
    try:
        factory = _FAMILIES[family]
    except KeyError:
        raise ValueError(f"unknown growth family {family!r}") from None
    return factory(float(param))


def make_growth(spec: dict) -> GrowthFunction:
    """Build a growth function from its config record."""
    family = spec.get("family")
    if family == "table":
        return _make_table(spec["points"])
    if "param" not in spec:
        raise ValueError("growth spec needs a 'param' field")
    return make_builtin(family, spec["param"])


def from_callables(
    ev: Callable,
    deriv: Callable | None = None,
    inverse: Callable | None = None,
    family: str = "custom",
) -> GrowthFunction:
    """Wrap raw callables as a GrowthFunction (mainly for test doubles)."""

    def ev_arr(x):
        return np.asarray(ev(np.asarray(x, dtype=float)), dtype=float)

    if deriv is None:

        def deriv(x):  # central difference with relative step
            x = np.asarray(x, dtype=float)
            h = np.maximum(np.abs(x) * 1e-6, 1e-9)
            return (ev_arr(x + h) - ev_arr(x - h)) / (2.0 * h)

    if inverse is None:

        def inverse(t):
            return _bisect_increasing(ev_arr, t, lo=1e-6)

    return GrowthFunction(family, {}, ev_arr, deriv, inverse)


def default_condition_grid(n: int = 1200, lo: float = 1e-3, hi: float = 1e6):
    """Log-spaced verification grid used by the shape and slope checks."""
    return np.geomspace(lo, hi, n)


# ---------------------------------------------------------------------------
# Condition checks
# ---------------------------------------------------------------------------


@dataclass
class CheckResult:
    ok: bool
    witnesses: list = field(default_factory=list)
    detail: dict = field(default_factory=dict)


def _require_finite(g: GrowthFunction, grid) -> np.ndarray:
    vals = g(grid)
    bad = ~np.isfinite(vals)
    if bad.any():
        x = float(np.asarray(grid)[bad][0])
        raise GrowthEvalError(f"growth function is not finite at x={x!r}")
    return vals


def check_shape(g: GrowthFunction, grid=None) -> CheckResult:
    """Positivity, monotonicity and derivative consistency on the grid.

    Flat-zero stretches on the left (as in the logarithmic families) are
    accepted: positivity and strict increase are required only once the
    function has left zero.  The closed-form derivative must agree with
    central differences to 1e-5 relative, except at stencils straddling the
    flat-zero boundary where the two-sided difference is meaningless.
    """
    if grid is None:
        grid = default_condition_grid()
    grid = np.asarray(grid, dtype=float)
    vals = _require_finite(g, grid)
    witnesses = []

    neg = vals < 0
    if neg.any():
        for x, v in zip(grid[neg][:5], vals[neg][:5]):
            witnesses.append({"kind": "negative", "x": float(x), "g": float(v)})
    if vals[-1] <= 0:
        witnesses.append({"kind": "never_positive", "x": float(grid[-1]), "g": float(vals[-1])})

    diffs = np.diff(vals)
    scale = np.maximum(np.abs(vals[:-1]), np.abs(vals[1:]))
    dec = diffs < -1e-12 * np.maximum(scale, 1.0)
    if dec.any():
        idx = np.nonzero(dec)[0][:5]
        for i in idx:
            witnesses.append(
                {
                    "kind": "decreasing",
                    "x": float(grid[i]),
                    "y": float(grid[i + 1]),
                    "gap": float(diffs[i]),
                }
            )
    # strictness once the function is positive
    flat = (vals[:-1] > 0) & (diffs <= 0) & ~dec
    if flat.any():
        i = int(np.nonzero(flat)[0][0])
        witnesses.append(
            {"kind": "not_strict", "x": float(grid[i]), "y": float(grid[i + 1])}
        )

    if g.family != "table":  # table derivative is itself a finite difference
        h = np.maximum(np.abs(grid) * 1e-6, 1e-9)
        lo_v = g(grid - h)
        hi_v = g(grid + h)
        fd = (hi_v - lo_v) / (2.0 * h)
        dv = g.deriv(grid)
        straddle = (lo_v == 0.0) & (hi_v > 0.0)
        err = np.abs(fd - dv)
        tol = 1e-5 * np.maximum(np.abs(dv), np.abs(fd)) + 1e-12
        bad = (err > tol) & ~straddle
        if bad.any():
            for i in np.nonzero(bad)[0][:5]:
                witnesses.append(
                    {
                        "kind": "derivative_mismatch",
                        "x": float(grid[i]),
                        "deriv": float(dv[i]),
                        "finite_difference": float(fd[i]),
                    }
                )

    return CheckResult(ok=not witnesses, witnesses=witnesses)


def check_slope_decay(g: GrowthFunction, grid=None) -> CheckResult:
    """Check that the derivative dies out, and fit the bound (x0, B).

    The per-decade maxima of g' must be non-increasing past their peak and
    must end at no more than half the peak value.  x0 is the first grid point
    past the peak of g'; B is twice the largest derivative at or beyond x0, so
    g'(x) < B holds with margin on the whole certified range.
    """
    if grid is None:
        grid = default_condition_grid()
    grid = np.asarray(grid, dtype=float)
    dv = np.asarray(g.deriv(grid), dtype=float)
    if not np.all(np.isfinite(dv)):
        x = float(grid[~np.isfinite(dv)][0])
        raise GrowthEvalError(f"derivative is not finite at x={x!r}")

    decades = np.floor(np.log10(grid)).astype(int)
    uniq = np.unique(decades)
    maxima = np.array([dv[decades == d].max() for d in uniq])

    witnesses = []
    peak_idx = int(np.argmax(maxima))
    peak = maxima[peak_idx]
    if peak <= 0:
        witnesses.append({"kind": "zero_derivative", "detail": "g' vanishes on the whole grid"})
        return CheckResult(ok=False, witnesses=witnesses)

    rise = maxima[peak_idx + 1 :] > np.maximum.accumulate(
        np.concatenate([[peak], maxima[peak_idx + 1 : -1]])
    ) * (1 + 1e-9)
    if rise.any():
        for k in np.nonzero(rise)[0][:5]:
            d = uniq[peak_idx + 1 + k]
            witnesses.append(
                {"kind": "rising_slope", "decade": int(d), "max_deriv": float(maxima[peak_idx + 1 + k])}
            )
    if maxima[-1] > 0.5 * peak:
        witnesses.append(
            {
                "kind": "slope_not_decaying",
                "decade": int(uniq[-1]),
                "max_deriv": float(maxima[-1]),
                "peak_deriv": float(peak),
            }
        )

    argmax = int(np.argmax(dv))
    if argmax + 1 >= len(grid):
        witnesses.append({"kind": "slope_peak_at_grid_end", "x": float(grid[-1])})
        return CheckResult(ok=False, witnesses=witnesses)
    x0 = float(grid[argmax + 1])
    b = 2.0 * float(dv[argmax + 1 :].max())
    return CheckResult(ok=not witnesses, witnesses=witnesses, detail={"x0": x0, "B": b})


def check_tail_integral(g: GrowthFunction, gamma: float) -> tuple[str, float]:
    """Integrate exp(-(1-gamma) g(x)) over [1, inf) by geometric doubling.

    Returns a verdict in {"finite", "divergent", "undetermined"} and the
    accumulated value.  The upper limit doubles until the last doubling
    contributes less than 1e-10 of the total; if that has not happened by
    x = 1e12 the integral is reported divergent (a finite-range statement).
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0,1), got {gamma}")
    coef = 1.0 - gamma

    def integrand(x):
        return np.exp(-coef * g(x))

    total = 0.0
    lo = 1.0
    while lo < INTEGRAL_X_MAX:
        hi = 2.0 * lo
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", integrate.IntegrationWarning)
                part, _ = integrate.quad(integrand, lo, hi, epsabs=0.0, epsrel=1e-10, limit=200)
        except Exception:
            return "undetermined", total
        if not math.isfinite(part):
            return "undetermined", total
        total += part
        lo = hi
        if total > 0 and part < 1e-10 * total:
            return "finite", total
    return "divergent", total


def check_increment_slack(
    g: GrowthFunction, gamma: float, x0: float, per_decade: int = 48, n_y: int = 64
) -> tuple[CheckResult, float]:
    """Fit the additive slack A of the increment bound g(x)-g(x-y) <= gamma g(y) + A.

    Maximizes the residual over a log-log grid with x in [2 x0, 1e8] and y in
    [x0, x/2], polishing the grid maximum by local refinement.  The fit is
    accepted when the running per-decade maximum gains less than 1e-6 over the
    last decade of x; otherwise the worst residuals of that decade are
    returned as witnesses.
    """
    if not 0 < gamma < 1:
        raise ValueError(f"gamma must be in (0,1), got {gamma}")
    x_lo = max(2.0 * x0, 2e-9)
    if x_lo >= INCREMENT_X_MAX / 4:
        raise ValueError("x0 too large for the increment grid")
    n_x = max(int(per_decade * math.log10(INCREMENT_X_MAX / x_lo)), per_decade) + 1
    xs = np.geomspace(x_lo, INCREMENT_X_MAX, n_x)

    frac = np.linspace(0.0, 1.0, n_y)

    def residual(x_col, f_row):
        ys = np.exp(np.log(x0) + f_row * (np.log(x_col / 2.0) - np.log(x0)))
        return g(x_col) - g(x_col - ys) + (-gamma) * g(ys), ys

    res, ys = residual(xs[:, None], frac[None, :])

    row_max = res.max(axis=1)
    decades = np.floor(np.log10(xs)).astype(int)
    running = np.maximum.accumulate(row_max)
    in_last = xs >= INCREMENT_X_MAX / 10.0
    rm_all = float(running[-1])
    rm_before = float(running[~in_last][-1]) if (~in_last).any() else -math.inf
    stabilized = rm_all - rm_before < 1e-6

    # polish the raw grid maximum with three nested local refinements
    i, j = np.unravel_index(np.argmax(res), res.shape)
    lx_lo, lx_hi = math.log(xs[max(i - 1, 0)]), math.log(xs[min(i + 1, n_x - 1)])
    f_lo, f_hi = frac[max(j - 1, 0)], frac[min(j + 1, n_y - 1)]
    best = float(res[i, j])
    for _ in range(3):
        lxs = np.exp(np.linspace(lx_lo, lx_hi, 33))
        fr = np.linspace(f_lo, f_hi, 33)
        sub, _ = residual(lxs[:, None], fr[None, :])
        bi, bj = np.unravel_index(np.argmax(sub), sub.shape)
        best = max(best, float(sub[bi, bj]))
        lx_lo, lx_hi = math.log(lxs[max(bi - 1, 0)]), math.log(lxs[min(bi + 1, 32)])
        f_lo, f_hi = fr[max(bj - 1, 0)], fr[min(bj + 1, 32)]

    a_fit = max(best, 0.0)
    if stabilized:
        return CheckResult(ok=True, detail={"A": a_fit, "running_max": rm_all}), a_fit

    witnesses = []
    last_rows = np.nonzero(in_last)[0]
    flat = [(res[r, c], r, c) for r in last_rows for c in [int(np.argmax(res[r]))]]
    flat.sort(reverse=True)
    for val, r, c in flat[:5]:
        witnesses.append(
            {"kind": "growing_increment", "x": float(xs[r]), "y": float(ys[r, c]), "residual": float(val)}
        )
    return CheckResult(ok=False, witnesses=witnesses, detail={"A": a_fit}), a_fit


# ---------------------------------------------------------------------------
# Certification report
# ---------------------------------------------------------------------------


@dataclass
class ConditionReport:
    """Outcome of the admissibility checks with the fitted constants."""

    family: str
    params: dict
    shape_ok: bool
    slope_decay_ok: bool
    tail_integral_ok: bool
    increment_ok: bool
    x0: float | None = None
    B: float | None = None
    gamma: float | None = None
    A: float | None = None
    integral_value: float | None = None
    grid_lo: float = 1e-3
    grid_hi: float = 1e6
    x_max: float = INCREMENT_X_MAX
    witnesses: dict = field(default_factory=dict)

    @property
    def all_ok(self) -> bool:
        return self.shape_ok and self.slope_decay_ok and self.tail_integral_ok and self.increment_ok

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "params": self.params,
            "shape_ok": self.shape_ok,
            "slope_decay_ok": self.slope_decay_ok,
            "tail_integral_ok": self.tail_integral_ok,
            "increment_ok": self.increment_ok,
            "x0": self.x0,
            "B": self.B,
            "gamma": self.gamma,
            "A": self.A,
            "integral_value": self.integral_value,
            "certified_grid": {"lo": self.grid_lo, "hi": self.grid_hi, "x_max": self.x_max},
            "witnesses": self.witnesses,
        }


def certify(g: GrowthFunction, grid=None, gammas: Sequence[float] = GAMMA_CANDIDATES) -> ConditionReport:
    """Run all admissibility checks and fit (gamma, A, x0, B).

    gamma is the smallest candidate for which both the tail integral converges
    and the increment slack stabilizes; smaller gamma certifies the stronger
    inequality.  Returns a report with violation witnesses when any check
    fails.
    """
    if grid is None:
        grid = default_condition_grid()
    grid = np.asarray(grid, dtype=float)
    witnesses: dict = {}

    shape = check_shape(g, grid)
    if not shape.ok:
        witnesses["shape"] = shape.witnesses
    slope = check_slope_decay(g, grid)
    if not slope.ok:
        witnesses["slope_decay"] = slope.witnesses

    report = ConditionReport(
        family=g.family,
        params=g.params,
        shape_ok=shape.ok,
        slope_decay_ok=slope.ok,
        tail_integral_ok=False,
        increment_ok=False,
        grid_lo=float(grid[0]),
        grid_hi=float(grid[-1]),
        witnesses=witnesses,
    )
    if not (shape.ok and slope.ok):
        return report

    report.x0 = slope.detail["x0"]
    report.B = slope.detail["B"]

    last_increment_witnesses = None
    for gamma in gammas:
        verdict, value = check_tail_integral(g, gamma)
        if verdict != "finite":
            continue
        inc, a_fit = check_increment_slack(g, gamma, report.x0)
        if inc.ok:
            report.tail_integral_ok = True
            report.increment_ok = True
            report.gamma = float(gamma)
            report.A = float(a_fit)
            report.integral_value = float(value)
            return report
        report.tail_integral_ok = True
        last_increment_witnesses = inc.witnesses
    if last_increment_witnesses is not None:
        witnesses["increment"] = last_increment_witnesses
    else:
        witnesses["tail_integral"] = [
            {"kind": "no_convergent_gamma", "detail": "integral did not converge for any candidate"}
        ]
    return report
