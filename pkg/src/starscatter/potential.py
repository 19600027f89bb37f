"""Edge potentials on a star graph.

Each edge of the graph is a half-line [0, infinity) carrying a real-valued
potential from one of five closed-form families.  Everything downstream
(solution of the scattering ODE, expansion coefficients, trace identities)
needs exact derivatives of the potential up to fairly high order, so each
family implements its derivatives analytically instead of by finite
differences.

Families and their parameters:

``exponential``   c * exp(-a*x)
``sech2``         c * sech(a*(x-s))**2
``gaussian``      c * exp(-a*(x-s)**2)
``powerlaw``      c * (1 + a*x)**(-p)
``bump``          c * exp(-1/(1-u**2)) on |u| < 1 with u = a*(x-s), else 0

All families declare a decay exponent ``rho`` used by the smoothness and
decay hypothesis checks; the first three and the bump are faster than any
power, so they declare rho = 2 (the largest admissible value), while the
power law declares min(p, 2).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.integrate import quad
from scipy.special import eval_hermite

from .errors import (
    ConfigError,
    HypothesisViolation,
    TruncationError,
    UnsupportedOrderError,
)

FAMILIES = ("exponential", "sech2", "gaussian", "powerlaw", "bump")

#: values of the potential below this are treated as numerically zero when
#: selecting the truncation point of the half-line
V_TINY = 1e-14

#: absolute ceiling on the weight-1 tail moment beyond the truncation point
TAIL_TINY = 1e-12

_X_CAP = 5.0e7

# below this value of 1-u^2 the bump factor exp(-1/(1-u^2)) underflows long
# before the rational prefactor can overflow, so we may return exact zero
_BUMP_FLOOR = 2.0e-3


@lru_cache(maxsize=64)
def _sech2_poly(order: int) -> np.ndarray:
    """Coefficients (ascending, in t = tanh y) of the polynomial P_order with
    d^order/dy^order sech^2(y) = P_order(tanh y)."""
    if order == 0:
        return np.array([1.0, 0.0, -1.0])  # 1 - t^2
    prev = _sech2_poly(order - 1)
    dprev = npoly.polyder(prev)
    return npoly.polymul(np.array([1.0, 0.0, -1.0]), dprev)


@lru_cache(maxsize=64)
def _bump_poly(order: int) -> np.ndarray:
    """Numerator N_order(u) with
    d^order/du^order exp(-1/(1-u^2)) = N_order(u) / (1-u^2)^(2*order) * exp(-1/(1-u^2))."""
    if order == 0:
        return np.array([1.0])
    n = _bump_poly(order - 1)
    one_minus_u2 = np.array([1.0, 0.0, -1.0])
    m = order - 1
    term1 = npoly.polymul(npoly.polyder(n), npoly.polymul(one_minus_u2, one_minus_u2))
    term2 = npoly.polymul(np.array([0.0, 4.0 * m]), npoly.polymul(one_minus_u2, n))
    term3 = npoly.polymul(np.array([0.0, -2.0]), n)
    return npoly.polyadd(npoly.polyadd(term1, term2), term3)


def _exp_weighted_tail(c_abs: float, rate: float, X: float, w: int) -> float:
    """Exact value of c_abs * integral_X^inf x^w exp(-rate*(x-X)) dx."""
    acc = 0.0
    for i in range(w + 1):
        acc += math.comb(w, i) * X ** (w - i) * math.factorial(i) / rate ** (i + 1)
    return c_abs * acc


@dataclass(frozen=True)
class EdgePotential:
    """One closed-form potential on a half-line edge.

    Parameters
    ----------
    family : str
        One of ``FAMILIES``.
    c : float
        Amplitude (sign carries through; attractive wells have c < 0).
    a : float
        Rate or inverse width, strictly positive.
    s : float
        Center shift where the family uses one (sech2, gaussian, bump).
    p : float
        Decay exponent, power-law family only.
    max_derivative_order : int
        Largest derivative order this instance promises to evaluate.
    """

    family: str
    c: float
    a: float = 1.0
    s: float = 0.0
    p: float = 0.0
    max_derivative_order: int = 8

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown potential family {self.family!r}")
        if not (self.a > 0):
            raise ConfigError("scale parameter a must be positive")
        if self.family == "powerlaw" and not (self.p > 0):
            raise ConfigError("powerlaw exponent p must be positive")
        if self.max_derivative_order < 0:
            raise ConfigError("max_derivative_order must be >= 0")
        for name in ("c", "a", "s", "p"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"parameter {name} must be finite")

    # -- evaluation ---------------------------------------------------------

    def __call__(self, x):
        return self.eval_deriv(x, 0)

    def eval_deriv(self, x, order: int):
        """Closed-form derivative of the potential, vectorized in x.

        Raises UnsupportedOrderError when ``order`` exceeds the declared cap.
        """
        if order < 0:
            raise UnsupportedOrderError("derivative order must be >= 0")
        if order > self.max_derivative_order:
            raise UnsupportedOrderError(
                f"order {order} exceeds declared cap {self.max_derivative_order}"
            )
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        if self.family == "exponential":
            out = self.c * (-self.a) ** order * np.exp(-self.a * x)
        elif self.family == "sech2":
            t = np.tanh(self.a * (x - self.s))
            out = self.c * self.a**order * npoly.polyval(t, _sech2_poly(order))
        elif self.family == "gaussian":
            z = math.sqrt(self.a) * (x - self.s)
            h = eval_hermite(order, z)
            out = self.c * (-math.sqrt(self.a)) ** order * h * np.exp(-(z**2))
        elif self.family == "powerlaw":
            fall = 1.0
            for i in range(order):
                fall *= -(self.p + i)
            out = self.c * self.a**order * fall * (1.0 + self.a * x) ** (-self.p - order)
        else:  # bump
            u = self.a * (x - self.s)
            w = 1.0 - u * u
            inside = w > _BUMP_FLOOR
            out = np.zeros_like(u)
            if np.any(inside):
                ui = u[inside]
                wi = w[inside]
                pref = npoly.polyval(ui, _bump_poly(order)) / wi ** (2 * order)
                out[inside] = self.c * self.a**order * pref * np.exp(-1.0 / wi)
        if scalar:
            return float(out[0])
        return out

    # -- decay metadata -----------------------------------------------------

    @property
    def rho(self) -> float:
        """Declared decay exponent for the derivative-decay hypothesis."""
        if self.family == "powerlaw":
            return min(self.p, 2.0)
        return 2.0

    def sup_abs(self) -> float:
        """Cheap upper bound on sup |v| over the half-line."""
        return abs(self.c)

    def feature_points(self, upper: float) -> list[float]:
        """Interior points worth handing to adaptive quadrature."""
        pts: list[float] = []
        if self.family in ("sech2", "gaussian"):
            pts = [self.s]
        elif self.family == "bump":
            half = 1.0 / self.a
            pts = [self.s - half, self.s, self.s + half]
        return sorted({p for p in pts if 0.0 < p < upper})

    def feature_scale(self) -> float:
        """Narrowest length scale of the profile; adaptive steppers must
        not stride across it or they can miss the potential entirely."""
        if self.c == 0.0:
            return math.inf
        if self.family == "gaussian":
            return 1.0 / math.sqrt(self.a)
        return 1.0 / self.a

    def support_end(self) -> float:
        """End of the support for compactly supported families, else inf."""
        if self.family == "bump":
            return max(0.0, self.s + 1.0 / self.a)
        return math.inf

    def tail_moment_bound(self, X: float, weight_power: int) -> float:
        """Upper bound on integral_X^inf x^w |v(x)| dx (exact for exponential
        and powerlaw).  Returns inf when the moment diverges."""
        w = weight_power
        cab = abs(self.c)
        if cab == 0.0:
            return 0.0
        if self.family == "exponential":
            return _exp_weighted_tail(cab * math.exp(-self.a * X), self.a, X, w)
        if self.family == "sech2":
            if X <= self.s:
                raise ValueError("tail bound for sech2 requires X > s")
            amp = 4.0 * cab * math.exp(-2.0 * self.a * (X - self.s))
            return _exp_weighted_tail(amp, 2.0 * self.a, X, w)
        if self.family == "gaussian":
            T = X - self.s
            if T <= 0:
                raise ValueError("tail bound for gaussian requires X > s")
            amp = cab * math.exp(-self.a * T * T)
            return _exp_weighted_tail(amp, 2.0 * self.a * T, X, w)
        if self.family == "powerlaw":
            if self.p <= w + 1:
                return math.inf
            T0 = 1.0 + self.a * X
            acc = 0.0
            for i in range(w + 1):
                acc += (
                    math.comb(w, i)
                    * (-1.0) ** (w - i)
                    * T0 ** (i - self.p + 1)
                    / (self.p - i - 1)
                )
            return cab * self.a ** (-w - 1) * acc
        # bump
        end = self.support_end()
        if X >= end:
            return 0.0
        return cab * math.exp(-1.0) * (end ** (w + 1) - X ** (w + 1)) / (w + 1)

    # -- integrals ----------------------------------------------------------

    def moment(self, weight_power: int) -> float:
        """integral_0^inf x^w |v(x)| dx for w in {0, 1, 2}.

        Adaptive quadrature on a truncated interval; the truncation point is
        pushed out until the analytic tail bound is negligible, except for
        power-law tails where the exact tail value is added instead.
        Raises HypothesisViolation when the moment diverges.
        """
        if weight_power not in (0, 1, 2):
            raise ConfigError("weight_power must be 0, 1 or 2")
        w = weight_power
        if self.c == 0.0:
            return 0.0
        if self.family == "powerlaw" and self.p <= w + 1:
            raise HypothesisViolation(
                f"moment of weight {w} diverges for powerlaw with p={self.p}"
            )
        goal = max(1e-13, 1e-13 * abs(self.c))
        X = max(16.0, 2.0 * (abs(self.s) + self.feature_scale()) + 10.0)
        tail = self.tail_moment_bound(X, w)
        while tail > goal and X < _X_CAP and self.family != "powerlaw":
            X *= 2.0
            tail = self.tail_moment_bound(X, w)
        if self.family == "powerlaw":
            X = min(max(X, 200.0 / self.a), 1e5)
            tail = self.tail_moment_bound(X, w)
        else:
            tail = 0.0

        def integrand(x):
            return x**w * abs(self.eval_deriv(x, 0))

        pts = self.feature_points(X)
        val, _ = quad(integrand, 0.0, X, points=pts or None,
                      epsabs=1e-13, epsrel=1e-11, limit=400)
        return val + tail


@lru_cache(maxsize=256)
def x_infinity(p: EdgePotential, v_eps: float = V_TINY, tail_eps: float = TAIL_TINY) -> float:
    """Truncation point of the half-line for numerical work with ``p``.

    Chosen so that |v(X)| < v_eps and the weight-1 tail moment beyond X is
    below tail_eps.  Raises TruncationError when no practical X achieves
    this (very slowly decaying power laws).
    """
    if p.c == 0.0:
        return 16.0
    X = max(16.0, 2.0 * (abs(p.s) + p.feature_scale()) + 10.0)
    while X <= _X_CAP:
        try:
            tail = p.tail_moment_bound(X, 1)
        except ValueError:
            X *= 2.0
            continue
        if abs(p.eval_deriv(X, 0)) < v_eps and tail < tail_eps:
            return X
        X *= 2.0
    raise TruncationError(
        f"cannot truncate {p.family} potential (p={p.p}) within X={_X_CAP:g}; "
        "tail decays too slowly for the requested accuracy"
    )


@dataclass(frozen=True)
class StarPotential:
    """A star graph potential: one EdgePotential per half-line edge."""

    edges: tuple[EdgePotential, ...]

    def __post_init__(self):
        if len(self.edges) < 2:
            raise ConfigError("a star graph needs at least two edges")
        object.__setattr__(self, "edges", tuple(self.edges))

    @property
    def n(self) -> int:
        return len(self.edges)

    def x_infinity(self) -> float:
        return max(x_infinity(e) for e in self.edges)

    def sup_abs(self) -> float:
        return max(e.sup_abs() for e in self.edges)

    def feature_points(self, upper: float) -> list[float]:
        pts: set[float] = set()
        for e in self.edges:
            pts.update(e.feature_points(upper))
        return sorted(pts)


def star(*edges: Iterable) -> StarPotential:
    """Convenience constructor from EdgePotential instances or kwargs dicts."""
    built = []
    for e in edges:
        if isinstance(e, EdgePotential):
            built.append(e)
        else:
            built.append(EdgePotential(**dict(e)))
    return StarPotential(tuple(built))


# -- hypothesis checking ----------------------------------------------------

@dataclass
class EdgeHypothesisReport:
    first_moment: float
    first_moment_ok: bool
    decay_ok: bool
    decay_slope: float
    rho: float
    second_moment: float | None
    second_moment_ok: bool | None

    def as_dict(self) -> dict:
        return {
            "first_moment": self.first_moment,
            "first_moment_ok": self.first_moment_ok,
            "decay_ok": self.decay_ok,
            "decay_slope": self.decay_slope,
            "rho": self.rho,
            "second_moment": self.second_moment,
            "second_moment_ok": self.second_moment_ok,
        }


@dataclass
class HypothesisReport:
    edges: list[EdgeHypothesisReport]
    need_second_moment: bool

    @property
    def ok(self) -> bool:
        for e in self.edges:
            if not (e.first_moment_ok and e.decay_ok):
                return False
            if self.need_second_moment and not e.second_moment_ok:
                return False
        return True

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "need_second_moment": self.need_second_moment,
            "edges": [e.as_dict() for e in self.edges],
        }


def _decay_check(e: EdgePotential) -> tuple[bool, float]:
    """Sampled boundedness check of |v^(m)(x)| (1+x)^(rho+m).

    Fits the log-log tail slope of the weighted derivative; a bounded weight
    has slope <= 0 up to sampling noise.  Checks orders up to
    min(4, max_derivative_order), which is as far as the declared derivative
    cap allows us to probe.
    """
    if e.c == 0.0:
        return True, 0.0
    rho = e.rho
    if not (1.0 < rho <= 2.0):
        return False, math.nan
    xs = np.geomspace(0.1, 400.0, 160)
    worst = 0.0
    for m in range(0, min(4, e.max_derivative_order) + 1):
        wvals = np.abs(e.eval_deriv(xs, m)) * (1.0 + xs) ** (rho + m)
        tail = xs >= 40.0
        wt = wvals[tail]
        if np.max(wt) < 1e-280:
            continue  # the weighted derivative already vanished
        keep = wt > np.max(wt) * 1e-13
        lx = np.log(xs[tail][keep])
        lw = np.log(wt[keep])
        if len(lx) < 4:
            continue
        slope = np.polyfit(lx, lw, 1)[0]
        worst = max(worst, slope)
    return bool(worst <= 0.05), float(worst)


def check_hypotheses(sp: StarPotential, need_second_moment: bool = False) -> HypothesisReport:
    """Report whether every edge satisfies the integrability and decay
    requirements (and, when asked, the second-moment condition)."""
    reports = []
    for e in sp.edges:
        try:
            fm = e.moment(0) + e.moment(1)
            fm_ok = math.isfinite(fm)
        except HypothesisViolation:
            fm = math.inf
            fm_ok = False
        decay_ok, slope = _decay_check(e)
        sm = None
        sm_ok = None
        if need_second_moment:
            try:
                sm = e.moment(0) + e.moment(2)
                sm_ok = math.isfinite(sm)
            except HypothesisViolation:
                sm = math.inf
                sm_ok = False
        reports.append(EdgeHypothesisReport(fm, fm_ok, decay_ok, slope, e.rho, sm, sm_ok))
    return HypothesisReport(reports, need_second_moment)
