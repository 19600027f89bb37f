"""Unit tests for the closed-form edge potentials.

Derivatives are checked against Richardson-extrapolated central differences,
moments against hand-integrated closed forms (with scipy.special supplying
beta/erf where convenient).
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import beta, erf

from starscatter.errors import (
    ConfigError,
    HypothesisViolation,
    TruncationError,
    UnsupportedOrderError,
)
from starscatter.potential import (
    EdgePotential,
    StarPotential,
    check_hypotheses,
    star,
    x_infinity,
)


def richardson_diff(f, x, h=1e-3):
    """Fourth-order derivative estimate from two central differences."""
    d1 = (f(x + h) - f(x - h)) / (2 * h)
    d2 = (f(x + h / 2) - f(x - h / 2)) / h
    return (4 * d2 - d1) / 3


ALL_EDGES = [
    EdgePotential("exponential", -1.3, 0.8),
    EdgePotential("sech2", -2.0, 1.4, s=0.6),
    EdgePotential("gaussian", 0.9, 1.7, s=1.1),
    EdgePotential("powerlaw", 2.0, 0.5, p=4.0),
    EdgePotential("bump", -3.0, 0.7, s=3.0),
]


@pytest.mark.parametrize("edge", ALL_EDGES, ids=[e.family for e in ALL_EDGES])
@pytest.mark.parametrize("order", [1, 2, 3, 4])
def test_derivatives_match_finite_differences(edge, order):
    xs = np.array([0.3, 0.9, 2.2, 3.4])
    for x in xs:
        want = richardson_diff(lambda t: edge.eval_deriv(t, order - 1), x)
        got = edge.eval_deriv(x, order)
        scale = max(1.0, abs(want))
        assert got == pytest.approx(want, abs=1e-7 * scale)


def test_eval_shapes():
    e = EdgePotential("sech2", -1.0, 1.0)
    assert isinstance(e(0.5), float)
    out = e(np.linspace(0, 3, 7))
    assert out.shape == (7,)


def test_exponential_moments_exact():
    e = EdgePotential("exponential", 1.0, 1.0)
    assert e.moment(0) == pytest.approx(1.0, abs=1e-10)
    assert e.moment(1) == pytest.approx(1.0, abs=1e-10)


def test_powerlaw_moments_beta_function():
    c, a, p = 2.0, 0.5, 4.0
    e = EdgePotential("powerlaw", c, a, p=p)
    for w in (0, 1):
        want = c * a ** (-(w + 1)) * beta(w + 1, p - w - 1)
        assert e.moment(w) == pytest.approx(want, rel=1e-8)


def test_gaussian_moment_erf():
    c, a, s = 0.7, 1.3, 0.9
    e = EdgePotential("gaussian", c, a, s=s)
    want = c * 0.5 * math.sqrt(math.pi / a) * (1.0 + erf(math.sqrt(a) * s))
    assert e.moment(0) == pytest.approx(want, rel=1e-9)


def test_sech2_moments_exact():
    e = EdgePotential("sech2", -2.0, 1.0)
    # moments integrate |v|, so the sign of c drops out
    assert e.moment(0) == pytest.approx(2.0, abs=1e-9)
    assert e.moment(1) == pytest.approx(2.0 * math.log(2.0), abs=1e-9)


def test_bump_moment_against_quadrature():
    e = EdgePotential("bump", -3.0, 0.7, s=3.0)
    lo, hi = 3.0 - 1.0 / 0.7, 3.0 + 1.0 / 0.7
    for w in (0, 1):
        want, _ = quad(lambda x: x**w * abs(e(x)), lo, hi, limit=200)
        assert e.moment(w) == pytest.approx(want, rel=1e-8)


def test_moment_rejects_divergent_powerlaw():
    e = EdgePotential("powerlaw", 1.0, 1.0, p=1.5)
    with pytest.raises(HypothesisViolation):
        e.moment(1)
    with pytest.raises(ConfigError):
        e.moment(3)


def test_tail_bound_exact_for_exponential():
    e = EdgePotential("exponential", 2.0, 1.0)
    X = 7.0
    want = 2.0 * (X + 1.0) * math.exp(-X)
    assert e.tail_moment_bound(X, 1) == pytest.approx(want, rel=1e-12)


def test_tail_bound_vanishes_past_bump_support():
    e = EdgePotential("bump", -3.0, 0.7, s=3.0)
    assert e.support_end() == pytest.approx(3.0 + 1.0 / 0.7)
    assert e.tail_moment_bound(5.0, 1) == 0.0
    assert e(5.0) == 0.0
    assert e.eval_deriv(5.0, 3) == 0.0


def test_x_infinity_properties():
    for e in ALL_EDGES:
        X = x_infinity(e)
        assert abs(e(X)) < 1e-14
        assert e.tail_moment_bound(X, 1) < 1e-12
        if e.family != "powerlaw":
            # power-law tails push X out to ~1e6; the rest stay compact
            assert X <= 1e3


def test_x_infinity_rejects_slow_powerlaw():
    e = EdgePotential("powerlaw", 1.0, 1.0, p=2.2)
    with pytest.raises(TruncationError):
        x_infinity(e)


def test_feature_scale():
    assert EdgePotential("gaussian", -1.0, 4.0).feature_scale() == pytest.approx(0.5)
    assert EdgePotential("sech2", -1.0, 5.0).feature_scale() == pytest.approx(0.2)
    assert EdgePotential("exponential", 0.0, 1.0).feature_scale() == math.inf


def test_feature_points_bump_support():
    e = EdgePotential("bump", -3.0, 5.0, s=8.0)
    assert e.feature_points(30.0) == pytest.approx([7.8, 8.0, 8.2])
    assert e.feature_points(8.1) == pytest.approx([7.8, 8.0])


def test_constructor_validation():
    with pytest.raises(ConfigError):
        EdgePotential("morse", -1.0, 1.0)
    with pytest.raises(ConfigError):
        EdgePotential("sech2", -1.0, 0.0)
    with pytest.raises(ConfigError):
        EdgePotential("powerlaw", -1.0, 1.0)  # p defaults to 0
    with pytest.raises(ConfigError):
        EdgePotential("sech2", math.inf, 1.0)
    with pytest.raises(ConfigError):
        StarPotential((EdgePotential("sech2", -1.0, 1.0),))


def test_derivative_order_cap():
    e = EdgePotential("sech2", -1.0, 1.0, max_derivative_order=3)
    e.eval_deriv(0.5, 3)
    with pytest.raises(UnsupportedOrderError):
        e.eval_deriv(0.5, 4)
    with pytest.raises(UnsupportedOrderError):
        e.eval_deriv(0.5, -1)


def test_hypothesis_report_good_star():
    sp = star(EdgePotential("sech2", -1.0, 1.0), EdgePotential("gaussian", 0.5, 1.0))
    rep = check_hypotheses(sp)
    assert rep.ok
    assert not rep.need_second_moment
    d = rep.as_dict()
    assert d["ok"] is True
    assert len(d["edges"]) == 2


def test_hypothesis_report_slow_powerlaw_fails():
    sp = star(
        EdgePotential("powerlaw", -1.0, 1.0, p=1.5),
        EdgePotential("sech2", -1.0, 1.0),
    )
    rep = check_hypotheses(sp)
    assert not rep.ok
    assert not rep.edges[0].first_moment_ok
    assert rep.edges[1].first_moment_ok


def test_second_moment_gate():
    fast = star(
        EdgePotential("powerlaw", -1.0, 1.0, p=3.5),
        EdgePotential("sech2", -1.0, 1.0),
    )
    assert check_hypotheses(fast, need_second_moment=True).ok
    slow = star(
        EdgePotential("powerlaw", -1.0, 1.0, p=2.8),
        EdgePotential("sech2", -1.0, 1.0),
    )
    rep = check_hypotheses(slow, need_second_moment=True)
    assert not rep.ok
    assert rep.edges[0].second_moment_ok is False
