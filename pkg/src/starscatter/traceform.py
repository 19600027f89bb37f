"""Trace identities tying the discrete spectrum to scattering data.

Each identity balances a weighted sum over the negative eigenvalues against
a regularized integral of the scattering phase or log-amplitude, with the
integral's divergent large-k behaviour removed term by term using the
coefficient table from the large-energy expansion.  The integrals split
into three zones:

* [0, k_min]: short extrapolation with a fitted local model, since the
  solver cannot be evaluated at zero energy;
* [k_min, K*]: Simpson quadrature on the scan grid;
* [K*, infinity): the next expansion term in closed form, with the term
  after it as an error bound.

K* is chosen below the scan top because solver noise in the integrand gets
amplified by the k-power weight while the truncation error of the tail
shrinks; the optimum balances the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from .asymptotics import (
    MAX_ORDER,
    CoefficientTable,
    build_coefficient_table,
    logD_truncation,
)
from .errors import ConfigError, NumericFailure, UnsupportedOrderError
from .pdet import DeterminantScan, pd_batch, scan
from .potential import StarPotential
from .spectrum import SpectrumResult, find_eigenvalues

#: assumed absolute noise level in eta / log a per scan sample, as a
#: multiple of the integrator tolerance
NOISE_FACTOR = 30.0

#: angles of the rays used for remainder-decay checks
RAY_ANGLES = (0.0, 0.25 * math.pi, 0.5 * math.pi)


@dataclass
class TraceReport:
    """Outcome of one identity check at power ``order``."""

    order: float
    spectral_sum: float
    integral: float
    lhs: float
    rhs: float
    residual: float
    gate: float
    budget: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.gate)

    def as_dict(self) -> dict:
        return {
            "order": self.order,
            "spectral_sum": self.spectral_sum,
            "integral": self.integral,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "residual": self.residual,
            "gate": self.gate,
            "passed": self.passed,
            "budget": dict(self.budget),
        }


def _gate(lhs: float, rhs: float) -> float:
    return 1e-3 * max(abs(lhs), abs(rhs), 1e-2)


def _L(table: CoefficientTable, m: int) -> float:
    if m < 1 or m > table.order:
        raise UnsupportedOrderError(
            f"coefficient L_{m} beyond the available table order {table.order}"
        )
    return table.L[m - 1]


def _require_table(sp: StarPotential, table: CoefficientTable | None,
                   order_needed: int) -> CoefficientTable:
    if order_needed > MAX_ORDER:
        raise UnsupportedOrderError(
            f"identity needs coefficients through order {order_needed}, "
            f"implemented up to {MAX_ORDER}"
        )
    if table is None or table.order < order_needed:
        table = build_coefficient_table(sp, order_needed)
    return table


def _fit_window(k: np.ndarray) -> np.ndarray:
    mask = k <= 3.0 * k[0]
    if np.count_nonzero(mask) < 20:
        mask = np.zeros_like(k, dtype=bool)
        mask[: min(20, k.size)] = True
    return mask


def _power_int(k_hi: float, w: float) -> float:
    """integral of k**w over [0, k_hi] (w > -1)."""
    return k_hi ** (w + 1.0) / (w + 1.0)


def _log_power_int(k_hi: float, w: float) -> float:
    """integral of k**w * log(k) over [0, k_hi] (w > -1)."""
    p = w + 1.0
    return k_hi ** p * (math.log(k_hi) / p - 1.0 / (p * p))


def _fit_eta_low(k: np.ndarray, eta: np.ndarray) -> tuple[np.ndarray, float]:
    """Quadratic model of eta near zero; returns coefficients and rms."""
    mask = _fit_window(k)
    kw = k[mask]
    design = np.column_stack([np.ones_like(kw), kw, kw * kw])
    coef, *_ = np.linalg.lstsq(design, eta[mask], rcond=None)
    rms = float(np.sqrt(np.mean((design @ coef - eta[mask]) ** 2)))
    return coef, rms


def _fit_loga_low(k: np.ndarray, loga: np.ndarray) -> tuple[np.ndarray, float]:
    """Model alpha*log k + beta + gamma*k of log a near zero."""
    mask = _fit_window(k)
    kw = k[mask]
    design = np.column_stack([np.log(kw), np.ones_like(kw), kw])
    coef, *_ = np.linalg.lstsq(design, loga[mask], rcond=None)
    rms = float(np.sqrt(np.mean((design @ coef - loga[mask]) ** 2)))
    return coef, rms


def _eta_low_integral(coef: np.ndarray, k_hi: float, w: float) -> float:
    e0, e1, e2 = coef
    return (e0 * _power_int(k_hi, w)
            + e1 * _power_int(k_hi, w + 1.0)
            + e2 * _power_int(k_hi, w + 2.0))


def _loga_low_integral(coef: np.ndarray, k_hi: float, w: float) -> float:
    alpha, beta, gamma = coef
    return (alpha * _log_power_int(k_hi, w)
            + beta * _power_int(k_hi, w)
            + gamma * _power_int(k_hi, w + 1.0))


def _split_index(k: np.ndarray, w: float, bound_coef: float,
                 bound_power: float, noise: float) -> int:
    """Index of the scan point used as the upper quadrature cutoff K*.

    Minimizes noise*K**(w+1)/(w+1) + bound_coef*K**(-bound_power), then
    snaps to the grid, keeping at least 48 points below the cutoff.
    """
    if bound_coef <= 0.0 or noise <= 0.0:
        return k.size - 1
    k_opt = (bound_power * bound_coef / noise) ** (1.0 / (w + bound_power + 1.0))
    k_opt = min(max(k_opt, 8.0), k[-1])
    idx = int(np.searchsorted(k, k_opt))
    return min(max(idx, 48), k.size - 1)


def _zone_integrals(
    k: np.ndarray,
    values: np.ndarray,
    w: float,
    sub: list[tuple[float, float]],
    tail_terms: list[tuple[float, float]],
    bound: tuple[float, float],
    low_model: str,
    tol: float,
) -> tuple[float, dict]:
    """Assemble the three-zone regularized integral

        I = int_0^inf [values(k) - sum_j c_j k^(p_j)] k^w dk

    where ``sub`` lists (c_j, p_j).  The tail beyond the cutoff K* is the
    closed-form sum of ``tail_terms`` entries (coef, exponent), each
    contributing coef * K***exponent, with the first omitted expansion term
    bounded by bound[0] * K***(-bound[1]).  ``low_model`` selects the
    near-zero extrapolation shape: "eta" quadratic, "loga" log-linear.
    """
    noise = NOISE_FACTOR * tol
    i_cut = _split_index(k, w, bound[0], bound[1], noise)
    k_cut = float(k[i_cut])
    kk = k[: i_cut + 1]
    vals = values[: i_cut + 1]

    bracket = vals.astype(float).copy()
    for c, p in sub:
        bracket -= c * kk ** p
    integrand = bracket * kk ** w
    i_scan = float(simpson(integrand, x=kk))
    i_coarse = float(simpson(integrand[::2], x=kk[::2]))
    simpson_err = abs(i_scan - i_coarse)

    k_min = float(k[0])
    if low_model == "eta":
        coef, rms = _fit_eta_low(k, values)
        low_main = _eta_low_integral(coef, k_min, w)
    else:
        coef, rms = _fit_loga_low(k, values)
        low_main = _loga_low_integral(coef, k_min, w)
    low_sub = sum(c * _power_int(k_min, w + p) for c, p in sub)
    i_low = low_main - low_sub
    low_err = 3.0 * rms * _power_int(k_min, w)

    i_tail = sum(c * k_cut ** p for c, p in tail_terms)
    tail_err = bound[0] * k_cut ** (-bound[1])

    noise_err = noise * (_power_int(k_cut, w) - _power_int(k_min, w))

    budget = {
        "k_split": k_cut,
        "simpson": simpson_err,
        "low_fit": low_err,
        "scan_noise": noise_err,
        "tail_bound": tail_err,
    }
    return i_low + i_scan + i_tail, budget


def _coef_beyond(table: CoefficientTable, index: int, prev: int, prev2: int) -> float:
    """|L_index|, extrapolated geometrically from |L_prev|, |L_prev2| when
    the table stops short.  Only used for error budgets, never for values."""
    if index <= table.order:
        return abs(_L(table, index))
    hi = abs(_L(table, prev))
    lo = abs(_L(table, prev2))
    return hi * max(1.0, hi / max(lo, 1e-30))


def verify_integer_order(
    sp: StarPotential,
    m: int,
    scan_data: DeterminantScan | None = None,
    table: CoefficientTable | None = None,
    spectrum: SpectrumResult | None = None,
    tol: float = 1e-10,
) -> TraceReport:
    """Identity at integer power m >= 1: the weighted eigenvalue sum plus a
    phase integral with its large-k expansion removed equals a multiple of
    the even coefficient L_{2m}."""
    if m < 1:
        raise ConfigError("integer identity needs m >= 1")
    table = _require_table(sp, table, 2 * m + 3)
    if scan_data is None:
        scan_data = scan(sp, tol=tol)
    if spectrum is None:
        spectrum = find_eigenvalues(sp, tol=tol)

    k = scan_data.k
    w = 2.0 * m - 1.0
    sub = [((-1.0) ** (j + 1) * _L(table, 2 * j + 1) * 0.5 ** (2 * j + 1),
            -(2.0 * j + 1.0)) for j in range(m)]
    # closed-form tail: next two odd expansion terms integrated over [K*, inf)
    tail_terms = []
    for j in (m, m + 1):
        c = ((-1.0) ** (j + 1) * _L(table, 2 * j + 1) * 0.5 ** (2 * j + 1)
             / (2 * j + 1 - 2 * m))
        tail_terms.append((c, float(2 * m - 2 * j - 1)))
    l_next = _coef_beyond(table, 2 * m + 5, 2 * m + 3, 2 * m + 1)
    bound = (l_next * 0.5 ** (2 * m + 5) / 5.0, 5.0)

    integral, budget = _zone_integrals(
        k, scan_data.eta, w, sub, tail_terms, bound, "eta", tol
    )
    spectral = spectrum.weighted_power_sum(float(m))
    lhs = spectral + (-1.0) ** m * (2.0 * m / math.pi) * integral
    rhs = -m * 4.0 ** (-m) * _L(table, 2 * m)
    gate = _gate(lhs, rhs)
    budget["gate"] = gate
    return TraceReport(
        order=float(m), spectral_sum=spectral, integral=integral,
        lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), gate=gate, budget=budget,
    )


def verify_half_integer_order(
    sp: StarPotential,
    m: int,
    scan_data: DeterminantScan | None = None,
    table: CoefficientTable | None = None,
    spectrum: SpectrumResult | None = None,
    tol: float = 1e-10,
) -> TraceReport:
    """Identity at power m + 1/2 for m >= 0: the eigenvalue sum plus a
    log-amplitude integral with even expansion terms removed equals a
    multiple of the odd coefficient L_{2m+1}."""
    if m < 0:
        raise ConfigError("half-integer identity needs m >= 0")
    table = _require_table(sp, table, 2 * m + 4)
    if scan_data is None:
        scan_data = scan(sp, tol=tol)
    if spectrum is None:
        spectrum = find_eigenvalues(sp, tol=tol)

    k = scan_data.k
    loga = np.log(scan_data.amplitude)
    w = 2.0 * m
    sub = [((-1.0) ** j * _L(table, 2 * j) * 0.25 ** j, -2.0 * j)
           for j in range(1, m + 1)]
    # closed-form tail: next two even expansion terms over [K*, inf)
    tail_terms = []
    for j in (m + 1, m + 2):
        c = ((-1.0) ** j * _L(table, 2 * j) * 0.25 ** j
             / (2 * j - 2 * m - 1))
        tail_terms.append((c, float(2 * m - 2 * j + 1)))
    l_next = _coef_beyond(table, 2 * m + 6, 2 * m + 4, 2 * m + 2)
    bound = (l_next * 0.25 ** (m + 3) / 5.0, 5.0)

    integral, budget = _zone_integrals(
        k, loga, w, sub, tail_terms, bound, "loga", tol
    )
    s = m + 0.5
    spectral = spectrum.weighted_power_sum(s)
    lhs = spectral + (-1.0) ** (m + 1) * ((2 * m + 1) / math.pi) * integral
    rhs = (2 * m + 1) * 0.25 ** (m + 1) * _L(table, 2 * m + 1)
    gate = _gate(lhs, rhs)
    budget["gate"] = gate
    return TraceReport(
        order=s, spectral_sum=spectral, integral=integral,
        lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), gate=gate, budget=budget,
    )


def verify_half_order(
    sp: StarPotential,
    scan_data: DeterminantScan | None = None,
    table: CoefficientTable | None = None,
    spectrum: SpectrumResult | None = None,
    tol: float = 1e-10,
) -> TraceReport:
    """Power 1/2 identity; the m = 0 member of the half-integer family."""
    return verify_half_integer_order(sp, 0, scan_data, table, spectrum, tol)


def verify_trace_identity(
    sp: StarPotential,
    s: float,
    scan_data: DeterminantScan | None = None,
    table: CoefficientTable | None = None,
    spectrum: SpectrumResult | None = None,
    tol: float = 1e-10,
) -> TraceReport:
    """Dispatch on the power: integers use the phase form, half-integers
    the log-amplitude form."""
    twice = 2.0 * s
    if abs(twice - round(twice)) > 1e-12 or s <= 0:
        raise ConfigError(
            f"identity power must be a positive multiple of 1/2, got {s}"
        )
    if abs(s - round(s)) < 1e-12:
        return verify_integer_order(sp, int(round(s)), scan_data, table,
                                    spectrum, tol)
    return verify_half_integer_order(sp, int(round(s - 0.5)), scan_data,
                                     table, spectrum, tol)


def fg_identity(
    sp: StarPotential,
    s: float,
    scan_data: DeterminantScan | None = None,
    table: CoefficientTable | None = None,
    spectrum: SpectrumResult | None = None,
    tol: float = 1e-10,
) -> TraceReport:
    """Fractional-power identity for 0 < s < 1/2: a sine/cosine combination
    of the log-amplitude and phase integrals against k**(2s-1) reproduces
    the weighted eigenvalue sum.  Both integrals converge without
    subtractions; their slow tails are evaluated from the expansion."""
    if not 0.0 < s < 0.5:
        raise ConfigError(f"fractional power must lie in (0, 1/2), got {s}")
    table = _require_table(sp, table, 5)
    if scan_data is None:
        scan_data = scan(sp, tol=tol)
    if spectrum is None:
        spectrum = find_eigenvalues(sp, tol=tol)

    k = scan_data.k
    K = float(k[-1])
    w = 2.0 * s - 1.0
    loga = np.log(scan_data.amplitude)
    eta = scan_data.eta

    f_scan = float(simpson(loga * k ** w, x=k))
    g_scan = float(simpson(eta * k ** w, x=k))

    coef_a, rms_a = _fit_loga_low(k, loga)
    coef_e, rms_e = _fit_eta_low(k, eta)
    k_min = float(k[0])
    f_low = _loga_low_integral(coef_a, k_min, w)
    g_low = _eta_low_integral(coef_e, k_min, w)

    # log a ~ -L2/(4 k^2) + L4/(16 k^4); eta ~ -L1/(2k) + L3/(8 k^3)
    l1, l2, l3, l4 = (_L(table, i) for i in range(1, 5))
    l5 = _L(table, 5)
    f_tail = -l2 / 4.0 * K ** (2 * s - 2.0) / (2.0 - 2.0 * s)
    f_tail += l4 / 16.0 * K ** (2 * s - 4.0) / (4.0 - 2.0 * s)
    g_tail = -l1 / 2.0 * K ** (2 * s - 1.0) / (1.0 - 2.0 * s)
    g_tail += l3 / 8.0 * K ** (2 * s - 3.0) / (3.0 - 2.0 * s)
    tail_err = abs(l5) / 32.0 * K ** (2 * s - 5.0) / (5.0 - 2.0 * s)

    f_val = f_low + f_scan + f_tail
    g_val = g_low + g_scan + g_tail

    spectral = spectrum.weighted_power_sum(s)
    lhs = f_val * math.sin(math.pi * s) - g_val * math.cos(math.pi * s)
    rhs = math.pi / (2.0 * s) * spectral
    gate = _gate(lhs, rhs)
    noise_err = NOISE_FACTOR * tol * _power_int(K, w)
    budget = {
        "f_value": f_val,
        "g_value": g_val,
        "low_fit": 3.0 * (rms_a + rms_e) * _power_int(k_min, w),
        "scan_noise": noise_err,
        "tail_bound": tail_err,
        "gate": gate,
    }
    return TraceReport(
        order=s, spectral_sum=spectral, integral=g_val,
        lhs=lhs, rhs=rhs, residual=abs(lhs - rhs), gate=gate, budget=budget,
    )


@dataclass
class LevinsonReport:
    """Phase-jump count check for the two-edge case."""

    jump: float
    expected: float
    residual: float
    gate: float
    eta_at_zero: float
    bound_count: int
    resonance_multiplicity: int

    @property
    def passed(self) -> bool:
        return bool(self.residual <= self.gate)

    def as_dict(self) -> dict:
        return {
            "jump": self.jump,
            "expected": self.expected,
            "residual": self.residual,
            "gate": self.gate,
            "eta_at_zero": self.eta_at_zero,
            "bound_count": self.bound_count,
            "resonance_multiplicity": self.resonance_multiplicity,
            "passed": self.passed,
        }


def levinson_check(
    sp: StarPotential,
    scan_data: DeterminantScan | None = None,
    spectrum: SpectrumResult | None = None,
    tol: float = 1e-10,
    gate: float = 0.05,
) -> LevinsonReport:
    """Phase increment eta(inf) - eta(0) against pi*(N + (m-1)/2) for a
    two-edge star, N counting eigenvalues with multiplicity and m the
    resonance multiplicity."""
    if sp.n != 2:
        raise ConfigError("phase-count check is stated for two edges only")
    if scan_data is None:
        scan_data = scan(sp, tol=tol)
    if spectrum is None:
        spectrum = find_eigenvalues(sp, tol=tol)
    coef, _ = _fit_eta_low(scan_data.k, scan_data.eta)
    eta0 = float(coef[0])
    jump = 0.0 - eta0
    n_bound = spectrum.total_multiplicity
    m = spectrum.resonance_multiplicity
    expected = math.pi * (n_bound + (m - 1) / 2.0)
    return LevinsonReport(
        jump=jump, expected=expected, residual=abs(jump - expected),
        gate=gate, eta_at_zero=eta0, bound_count=n_bound,
        resonance_multiplicity=m,
    )


@dataclass
class DecayRay:
    angle: float
    slope: float | None
    points_used: int
    max_remainder: float

    def as_dict(self) -> dict:
        return {
            "angle": self.angle,
            "slope": self.slope,
            "points_used": self.points_used,
            "max_remainder": self.max_remainder,
        }


@dataclass
class DecayReport:
    """Slopes of the expansion remainder along rays in the upper plane."""

    truncation_order: int
    expected_slope: float
    rays: tuple[DecayRay, ...]
    slope_tol: float = 0.2

    @property
    def passed(self) -> bool:
        conclusive = [r for r in self.rays if r.slope is not None]
        if not conclusive:
            # remainder sits below the noise floor everywhere: nothing to
            # verify but also nothing violated (exact-zero situation)
            return all(r.max_remainder < 1e-9 for r in self.rays)
        # the claim is an upper bound; decaying faster than the expected
        # power (as happens when the next coefficient vanishes) is fine
        return all(r.slope <= self.expected_slope + self.slope_tol
                   for r in conclusive)

    def as_dict(self) -> dict:
        return {
            "truncation_order": self.truncation_order,
            "expected_slope": self.expected_slope,
            "slope_tol": self.slope_tol,
            "rays": [r.as_dict() for r in self.rays],
            "passed": self.passed,
        }


def decay_samples(
    sp: StarPotential,
    tol: float = 1e-11,
    r_min: float = 10.0,
    r_max: float = 200.0,
    nradii: int = 12,
) -> tuple[np.ndarray, np.ndarray]:
    """Determinant samples on radial rays, shared by decay checks at all
    truncation orders.  Returns (zetas, D) with shape (nrays, nradii)."""
    radii = np.geomspace(r_min, r_max, nradii)
    zetas = np.array([
        radii * complex(math.cos(a), math.sin(a)) for a in RAY_ANGLES
    ])
    d, _, _ = pd_batch(sp, zetas.ravel(), tol)
    return zetas, d.reshape(zetas.shape)


def remainder_decay(
    sp: StarPotential,
    truncation_order: int,
    table: CoefficientTable | None = None,
    samples: tuple[np.ndarray, np.ndarray] | None = None,
    tol: float = 1e-11,
) -> DecayReport:
    """Fit the decay rate of log D minus its truncated expansion along the
    sample rays; the remainder after M terms should fall off one power
    faster than the last kept term."""
    if truncation_order < 1:
        raise ConfigError("truncation order must be at least 1")
    table = _require_table(sp, table, truncation_order)
    if samples is None:
        samples = decay_samples(sp, tol)
    zetas, d = samples

    logd = np.log(d)
    if np.max(np.abs(logd.imag)) > 2.8:
        raise NumericFailure(
            "log D winds too far on the sample rays; enlarge the radii"
        )
    rays = []
    for i, angle in enumerate(RAY_ANGLES):
        z = zetas[i]
        resid = logd[i] - logD_truncation(table.L, z, truncation_order)
        floor = 50.0 * tol * (1.0 + np.abs(logd[i]))
        mask = np.abs(resid) > floor
        used = int(np.count_nonzero(mask))
        max_rem = float(np.max(np.abs(resid)))
        if used < 4:
            rays.append(DecayRay(angle, None, used, max_rem))
            continue
        slope = float(np.polyfit(np.log(np.abs(z[mask])),
                                 np.log(np.abs(resid[mask])), 1)[0])
        rays.append(DecayRay(angle, slope, used, max_rem))
    return DecayReport(
        truncation_order=truncation_order,
        expected_slope=-(truncation_order + 1.0),
        rays=tuple(rays),
    )
