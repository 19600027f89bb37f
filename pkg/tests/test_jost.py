"""Unit tests for the decaying-solution boundary data.

The main oracles are the free edge (exact closed form), the c*sech^2 edge at
c = -2 whose decaying solution is elementary, and an independent fixed-step
RK4 integrator of the raw second-order equation.
"""

import math

import numpy as np
import pytest

from starscatter.errors import EvaluationDomainError
from starscatter.jost import (
    LOW_ENERGY_FLOOR,
    fixed_step_reference,
    jost_at_origin,
    jost_batch,
    zero_energy_solution,
)
from starscatter.potential import EdgePotential, star, x_infinity


def soliton_boundary(zeta):
    """Exact boundary data for v = -2 sech^2(x): the decaying solution is
    e^(i zeta x) (i zeta - tanh x) / (i zeta - 1)."""
    z = complex(zeta)
    theta0 = -1j * z / (1.0 - 1j * z)
    dtheta0 = (z * z + 1.0) / (1.0 - 1j * z)
    return theta0, dtheta0


FREE = EdgePotential("exponential", 0.0, 1.0)
SOLITON = EdgePotential("sech2", -2.0, 1.0)


def test_free_edge_is_exact():
    zetas = np.array([0.3, 1.0, 4.0 + 0.0j, 2.0 + 1.5j, 5.0j])
    th, dth = jost_batch(FREE, zetas, x_start=20.0)
    assert np.max(np.abs(th - 1.0)) < 1e-12
    assert np.max(np.abs(dth - 1j * zetas)) < 1e-12


@pytest.mark.parametrize("zeta", [1.0, 2.0j, 0.5 + 0.3j, 3.0 - 0.0j, 0.05 + 2.0j])
def test_soliton_closed_form(zeta):
    sp = star(SOLITON, SOLITON)
    data = jost_at_origin(sp, 0, zeta)
    want_t, want_dt = soliton_boundary(zeta)
    assert data.theta0 == pytest.approx(want_t, abs=1e-9)
    assert data.dtheta0 == pytest.approx(want_dt, abs=1e-9)


@pytest.mark.parametrize(
    "edge",
    [
        EdgePotential("exponential", -1.3, 0.8),
        EdgePotential("gaussian", 0.9, 1.7, s=1.1),
        EdgePotential("powerlaw", -2.0, 0.5, p=4.0),
    ],
    ids=lambda e: e.family,
)
def test_agrees_with_fixed_step_rk4(edge):
    # both solvers get the same truncation point, so they solve the same
    # problem and must agree regardless of the tail beyond it
    X = min(x_infinity(edge), 150.0)
    for k in (0.7, 2.3):
        th, dth = jost_batch(edge, np.array([k]), x_start=X)
        ref_t, ref_dt = fixed_step_reference(edge, k, X, nsteps=50000)
        assert abs(th[0] - ref_t) < 1e-8
        assert abs(dth[0] - ref_dt) < 1e-8 * max(1.0, abs(ref_dt))


def test_conjugation_symmetry_real_axis():
    edge = EdgePotential("sech2", -1.4, 1.1, s=0.4)
    k = 1.7
    th, dth = jost_batch(edge, np.array([k, -k], dtype=complex), x_start=25.0)
    # both signs ride the same adaptive trajectory, so the symmetry is exact
    assert th[1] == np.conj(th[0])
    assert dth[1] == np.conj(dth[0])


def test_wronskian_constant_along_edge():
    sp = star(EdgePotential("gaussian", -1.2, 0.9, s=0.8), FREE)
    k = 1.3
    data = jost_at_origin(sp, 0, k, trajectory_points=200)
    x = data.trajectory[:, 0]
    th = data.trajectory[:, 1]
    dth = data.trajectory[:, 2]
    w = np.conj(th) * dth - np.conj(dth) * th
    assert x.shape == (200,)
    assert np.max(np.abs(w - 2j * k)) < 1e-8


def test_truncation_insensitivity():
    sp = star(EdgePotential("exponential", -0.8, 1.2), FREE)
    X = sp.x_infinity()
    a = jost_at_origin(sp, 0, 1.1, x_start=X)
    b = jost_at_origin(sp, 0, 1.1, x_start=2 * X)
    assert abs(a.theta0 - b.theta0) < 1e-9
    assert abs(a.dtheta0 - b.dtheta0) < 1e-9


def test_weak_potential_stays_near_free():
    edge = EdgePotential("sech2", -0.01, 1.0)
    th, dth = jost_batch(edge, np.array([1.0 + 0.0j]), x_start=20.0)
    # first-order smallness in c, but clearly distinguishable from free
    assert 1e-4 < abs(th[0] - 1.0) < 0.02


def test_narrow_bump_not_skipped():
    # a localized profile far from the vertex: unconstrained adaptive steps
    # can cross its support without sampling it, which returns free data
    edge = EdgePotential("bump", -40.0, 5.0, s=8.0)
    th, _ = jost_batch(edge, np.array([2.0 + 0.5j]), x_start=36.0)
    assert abs(th[0] - 1.0) > 0.1


def test_zero_energy_soliton():
    # for c = -2 sech^2 the bounded zero-energy solution is tanh(x)
    sp = star(SOLITON, SOLITON)
    u0, du0 = zero_energy_solution(sp, 0)
    assert abs(u0) < 1e-9
    assert du0 == pytest.approx(1.0, abs=1e-9)


def test_domain_validation():
    sp = star(SOLITON, SOLITON)
    with pytest.raises(EvaluationDomainError):
        jost_at_origin(sp, 0, 1.0 - 0.5j)
    with pytest.raises(EvaluationDomainError):
        jost_at_origin(sp, 0, 0.5 * LOW_ENERGY_FLOOR)
    # explicitly allowed when the caller opts in
    data = jost_at_origin(sp, 0, 0.5 * LOW_ENERGY_FLOOR * 1j, allow_low_energy=True)
    assert np.isfinite(data.theta0.real)


def test_trajectory_csv(tmp_path):
    sp = star(SOLITON, SOLITON)
    data = jost_at_origin(sp, 0, 1.0, trajectory_points=50)
    out = tmp_path / "traj.csv"
    data.trajectory_to_csv(out)
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "x,re_theta,im_theta,re_dtheta,im_dtheta"
    assert len(lines) == 51
