"""Unit tests for eigenvalue location and multiplicity counting.

Closed-form anchors: the two-edge -2 sech^2 star (single eigenvalue -1) and
the identical -8 sech^2 star, whose levels follow from s(s+1) = 8 with the
even levels living in the symmetric sector (multiplicity 1) and the odd ones
in the antisymmetric sector (multiplicity n - 1).
"""

import math

import numpy as np
import pytest

from starscatter.errors import AmbiguousResonanceError, ContourThroughZeroError
from starscatter.potential import EdgePotential, star
from starscatter.spectrum import (
    find_eigenvalues,
    oracle_eigenvalues,
    resonance_multiplicity,
    zero_order,
)

SOLITON = EdgePotential("sech2", -2.0, 1.0)
FREE = EdgePotential("exponential", 0.0, 1.0)


def deep_star_levels(n):
    """Exact spectrum of the n-edge star with -8 sech^2 on every edge."""
    s = (-1.0 + math.sqrt(33.0)) / 2.0
    return [
        (-(s**2), 1),          # even half-line level, symmetric sector
        (-((s - 1) ** 2), n - 1),  # odd level, antisymmetric sector
        (-((s - 2) ** 2), 1),
    ]


def test_free_star_has_no_eigenvalues():
    res = find_eigenvalues(star(FREE, FREE, FREE))
    assert res.eigenvalues == ()
    assert res.total_multiplicity == 0
    assert res.resonance_multiplicity == 1


def test_soliton_pair_single_state():
    res = find_eigenvalues(star(SOLITON, SOLITON))
    assert res.multiplicities == (1,)
    assert res.eigenvalues[0] == pytest.approx(-1.0, abs=1e-8)
    assert res.kappas[0] == pytest.approx(1.0, abs=1e-8)
    assert res.resonance_multiplicity == 1
    assert res.weighted_power_sum(0.5) == pytest.approx(1.0, abs=1e-7)
    assert res.weighted_power_sum(2.0) == pytest.approx(1.0, abs=1e-7)


@pytest.mark.parametrize("n", [3, 5])
def test_deep_identical_star_degenerate_levels(n):
    deep = EdgePotential("sech2", -8.0, 1.0)
    res = find_eigenvalues(star(*[deep] * n))
    want = deep_star_levels(n)
    assert res.multiplicities == tuple(m for _, m in want)
    for got, (lam, _) in zip(res.eigenvalues, want):
        assert got == pytest.approx(lam, abs=1e-7)
    assert res.resonance_multiplicity == 0


def test_bump_star_regression():
    sp = star(
        EdgePotential("bump", -3.0, 0.5, s=2.5),
        EdgePotential("sech2", -2.0, 1.0),
    )
    res = find_eigenvalues(sp)
    assert res.multiplicities == (1, 1)
    assert res.eigenvalues[0] == pytest.approx(-0.6758381372806, abs=1e-6)
    assert res.eigenvalues[1] == pytest.approx(-0.3601537189370, abs=1e-6)
    assert res.resonance_multiplicity == 0


def test_matches_discretization_oracle():
    sp = star(
        EdgePotential("bump", -3.0, 0.5, s=2.5),
        EdgePotential("sech2", -2.0, 1.0),
    )
    res = find_eigenvalues(sp)
    oracle = oracle_eigenvalues(sp, h=0.01, x_max=30.0)
    assert len(oracle) == len(res.eigenvalues)
    for (lam_o, mult_o), lam, mult in zip(oracle, res.eigenvalues, res.multiplicities):
        assert mult_o == mult
        assert lam == pytest.approx(lam_o, abs=1e-3)


def test_oracle_resolves_degeneracy():
    deep = EdgePotential("sech2", -8.0, 1.0)
    oracle = oracle_eigenvalues(star(deep, deep, deep), h=0.01, x_max=25.0)
    mults = [m for _, m in oracle]
    assert mults == [1, 2, 1]
    want = deep_star_levels(3)
    for (lam_o, _), (lam, _) in zip(oracle, want):
        assert lam_o == pytest.approx(lam, abs=2e-3)


def test_deepening_lowers_every_level():
    base = star(
        EdgePotential("sech2", -1.5, 1.0),
        EdgePotential("exponential", -1.0, 1.2),
    )
    deeper = star(
        EdgePotential("sech2", -1.5 * 1.21, 1.0),
        EdgePotential("exponential", -1.0 * 1.21, 1.2),
    )
    a = find_eigenvalues(base)
    b = find_eigenvalues(deeper)
    assert b.total_multiplicity >= a.total_multiplicity
    # min-max: scaling the potential down pushes each level down
    for lam_a, lam_b in zip(a.eigenvalues[::-1], b.eigenvalues[::-1]):
        assert lam_b < lam_a


def test_resonance_ranks():
    assert resonance_multiplicity(star(FREE, FREE)) == 1
    assert resonance_multiplicity(star(FREE, FREE, FREE)) == 1
    assert resonance_multiplicity(star(SOLITON, SOLITON)) == 1
    assert resonance_multiplicity(star(SOLITON, SOLITON, SOLITON)) == 2
    deep = EdgePotential("sech2", -8.0, 1.0)
    assert resonance_multiplicity(star(deep, deep, deep)) == 0
    generic = star(
        EdgePotential("exponential", -1.5, 1.0),
        EdgePotential("sech2", -1.0, 0.8),
    )
    assert resonance_multiplicity(generic) == 0


def test_resonance_ambiguity_is_reported():
    # one edge detuned from the resonant depth by just enough that the
    # smallest singular value lands inside the undecidable band
    sp = star(EdgePotential("sech2", -2.0 + 1e-7, 1.0), SOLITON)
    with pytest.raises(AmbiguousResonanceError) as exc:
        resonance_multiplicity(sp)
    assert set(exc.value.candidates) == {0, 1}


def test_zero_order_counts():
    sp = star(SOLITON, SOLITON)
    assert zero_order(sp, 1.0j, 0.3) == 1
    assert zero_order(sp, 0.45j, 0.2) == 0
    assert zero_order(sp, 2.0 + 1.0j, 0.5) == 0


def test_zero_on_contour_is_refused():
    sp = star(SOLITON, SOLITON)
    with pytest.raises(ContourThroughZeroError):
        zero_order(sp, 1.25j, 0.25)
