"""Decaying solutions of the edge Schrodinger equation.

On each edge we need the solution theta(x, zeta) of

    -theta'' + v(x) theta = zeta**2 theta

that behaves like exp(i x zeta) far out on the half-line (Im zeta >= 0).
Integrating theta itself backward from the truncation point underflows once
Im zeta is sizable, so the solver works with the phase-normalized unknown

    phi(x) = theta(x) * exp(-i x zeta),    phi'' + 2 i zeta phi' = v phi,

which tends to 1 at infinity and stays O(1) along the whole ray.  Backward
integration is stable: the fast homogeneous mode exp(-2 i zeta x) decays in
the direction of integration for Im zeta > 0 and is neutral on the real
axis.

The batched entry point integrates one stacked system for many zeta values
at once, which is what makes dense spectral scans affordable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .errors import EvaluationDomainError, NumericFailure, TruncationError
from .potential import EdgePotential, StarPotential

#: evaluations are refused below this |zeta| unless explicitly allowed;
#: the determinant degenerates at zeta = 0 and every caller is expected to
#: work on a grid bounded away from it
LOW_ENERGY_FLOOR = 1e-3


@dataclass
class JostData:
    """Boundary data of the decaying solution on one edge."""

    edge: int
    zeta: complex
    theta0: complex
    dtheta0: complex
    trajectory: np.ndarray | None = None  # columns: x, theta, dtheta

    def trajectory_to_csv(self, path) -> None:
        if self.trajectory is None:
            raise ValueError("solution was computed without trajectory samples")
        with open(path, "w") as fh:
            fh.write("x,re_theta,im_theta,re_dtheta,im_dtheta\n")
            for x, th, dth in self.trajectory:
                fh.write(
                    f"{x.real:.17g},{th.real:.17g},{th.imag:.17g},"
                    f"{dth.real:.17g},{dth.imag:.17g}\n"
                )


def _check_zeta(zeta: complex, allow_low_energy: bool) -> None:
    if zeta.imag < -1e-12:
        raise EvaluationDomainError(
            f"zeta={zeta} lies in the lower half-plane; the decaying solution "
            "is defined for Im zeta >= 0"
        )
    if not allow_low_energy and abs(zeta) < LOW_ENERGY_FLOOR:
        raise EvaluationDomainError(
            f"|zeta|={abs(zeta):.2e} is below the low-energy floor "
            f"{LOW_ENERGY_FLOOR}; evaluate on a grid bounded away from 0"
        )


def integrate_phase_normalized(
    e: EdgePotential,
    zetas,
    x_start: float,
    tol: float = 1e-10,
    t_eval=None,
):
    """Integrate the phase-normalized system for a batch of zeta values.

    Returns the solve_ivp solution object; state layout is
    [phi_1..phi_nz, phi'_1..phi'_nz].
    """
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    nz = len(zetas)
    y0 = np.concatenate([np.ones(nz, dtype=complex), np.zeros(nz, dtype=complex)])
    two_i_zeta = 2j * zetas

    def rhs(x, y):
        phi = y[:nz]
        dphi = y[nz:]
        v = e.eval_deriv(x, 0)
        return np.concatenate([dphi, v * phi - two_i_zeta * dphi])

    cap = _step_cap(e)
    # a finite cap forces steps through numerically dead stretches where both
    # embedded error estimates are exactly zero; DOP853 then evaluates 0/0 in
    # its step controller, which is harmless but noisy
    with np.errstate(invalid="ignore") if np.isfinite(cap) else np.errstate():
        sol = solve_ivp(
            rhs,
            (x_start, 0.0),
            y0,
            method="DOP853",
            rtol=tol,
            atol=tol * 1e-2,
            max_step=cap,
            t_eval=t_eval,
        )
    if not sol.success:
        raise NumericFailure(f"edge integration failed: {sol.message}")
    return sol


def _step_cap(e: EdgePotential) -> float:
    """Upper bound on the step so error control always samples the potential.

    Only profiles with an interior peak need this: a long flat approach lets
    the stepper grow its step until every stage straddles the peak and the
    solution comes back free.  Profiles that are monotone toward the vertex
    (exponential, powerlaw) place their maximum at the integration endpoint,
    where a stage always lands, so they stay uncapped; a cap there would be
    ruinous for slowly decaying tails with truncation points around 1e6."""
    if e.family in ("sech2", "gaussian", "bump") and e.c != 0.0:
        return min(2.0, 0.5 * e.feature_scale())
    return np.inf


@lru_cache(maxsize=4096)
def spectral_start(e: EdgePotential, zeta_floor: float, tol: float = 1e-10) -> float:
    """Truncation point for boundary-value work at |zeta| >= zeta_floor.

    Starting the backward integration at X with the free data (1, 0)
    neglects the potential beyond X, which feeds an error of order
    (integral of |v| past X) / (2 |zeta|) into the boundary values.  The
    returned point keeps that a decade below the stepping tolerance.

    This is deliberately looser than ``x_infinity``, whose moment-grade
    budget lands near 1e6 for slow power-law tails.  The stepper pays per
    unit length out there (the derivative carries an oscillatory mode on
    the real axis and a stiff one off it), so the start has to scale with
    the accuracy a given |zeta| actually needs.
    """
    budget = 0.4 * tol * max(zeta_floor, LOW_ENERGY_FLOOR)
    if e.c == 0.0:
        return 16.0
    X = max(16.0, 2.0 * (abs(e.s) + e.feature_scale()) + 10.0)
    while X <= 5.0e7:
        try:
            if e.tail_moment_bound(X, 0) <= budget:
                return X
        except ValueError:
            pass
        X *= 1.5
    raise TruncationError(
        f"no affordable integration start for the {e.family} tail (p={e.p}); "
        "it decays too slowly for the requested tolerance"
    )


def jost_batch(e: EdgePotential, zetas, x_start: float, tol: float = 1e-10):
    """Boundary values (theta0, dtheta0) for a batch of zeta, one edge."""
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    sol = integrate_phase_normalized(e, zetas, x_start, tol)
    nz = len(zetas)
    phi0 = sol.y[:nz, -1]
    dphi0 = sol.y[nz:, -1]
    theta0 = phi0
    dtheta0 = dphi0 + 1j * zetas * phi0
    return theta0, dtheta0


def jost_at_origin(
    sp: StarPotential,
    edge: int,
    zeta: complex,
    tol: float = 1e-10,
    x_start: float | None = None,
    trajectory_points: int = 0,
    allow_low_energy: bool = False,
) -> JostData:
    """Boundary data of the decaying solution on one edge of the star.

    ``x_start`` overrides the automatic truncation point (used by the
    truncation-insensitivity checks).  With ``trajectory_points`` > 0 the
    solution is also sampled along the edge.
    """
    zeta = complex(zeta)
    _check_zeta(zeta, allow_low_energy)
    ep = sp.edges[edge]
    if x_start is None:
        x_start = spectral_start(ep, abs(zeta), tol)
    t_eval = None
    if trajectory_points:
        t_eval = np.linspace(x_start, 0.0, trajectory_points)
    sol = integrate_phase_normalized(ep, np.array([zeta]), x_start, tol, t_eval=t_eval)
    phi0 = sol.y[0, -1]
    dphi0 = sol.y[1, -1]
    traj = None
    if trajectory_points:
        xs = sol.t
        phase = np.exp(1j * zeta * xs)
        theta = sol.y[0] * phase
        dtheta = (sol.y[1] + 1j * zeta * sol.y[0]) * phase
        traj = np.column_stack([xs.astype(complex), theta, dtheta])
    return JostData(
        edge=edge,
        zeta=zeta,
        theta0=complex(phi0),
        dtheta0=complex(dphi0 + 1j * zeta * phi0),
        trajectory=traj,
    )


def zero_energy_solution(
    sp: StarPotential, edge: int, tol: float = 1e-12, x_start: float | None = None
) -> tuple[float, float]:
    """Boundary data (u(0), u'(0)) of the bounded zero-energy solution,
    normalized by u = 1, u' = 0 at the truncation point."""
    ep = sp.edges[edge]
    if x_start is None:
        x_start = sp.x_infinity()

    def rhs(x, y):
        return [y[1], ep.eval_deriv(x, 0) * y[0]]

    cap = _step_cap(ep)
    with np.errstate(invalid="ignore") if np.isfinite(cap) else np.errstate():
        sol = solve_ivp(rhs, (x_start, 0.0), [1.0, 0.0], method="DOP853",
                        rtol=tol, atol=tol * 1e-2, max_step=cap)
    if not sol.success:
        raise NumericFailure(f"zero-energy integration failed: {sol.message}")
    return float(sol.y[0, -1]), float(sol.y[1, -1])


def fixed_step_reference(
    e: EdgePotential, zeta: complex, x_start: float, nsteps: int = 20000
) -> tuple[complex, complex]:
    """Independent oracle: classic RK4 with a fixed step on the raw
    (un-normalized) equation theta'' = (v - zeta^2) theta.

    Deliberately shares nothing with the adaptive solver: different
    formulation, different stepper.  Real zeta only; the raw form underflows
    off the axis.
    """
    zeta = complex(zeta)
    if abs(zeta.imag) > 1e-12:
        raise EvaluationDomainError("the fixed-step reference is for real zeta")
    h = -x_start / nsteps

    def f(x, y):
        th, dth = y
        return np.array([dth, (e.eval_deriv(x, 0) - zeta**2) * th], dtype=complex)

    x = x_start
    y = np.array([np.exp(1j * zeta * x_start), 1j * zeta * np.exp(1j * zeta * x_start)])
    for _ in range(nsteps):
        k1 = f(x, y)
        k2 = f(x + h / 2, y + h / 2 * k1)
        k3 = f(x + h / 2, y + h / 2 * k2)
        k4 = f(x + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x += h
    return complex(y[0]), complex(y[1])
