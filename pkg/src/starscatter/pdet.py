"""Perturbation determinant of the star-graph operator.

Relative to the free operator with the same vertex condition, the
determinant factorizes into the edge boundary values theta_j(0, zeta) and a
vertex factor K(zeta)/(i n zeta) with K the sum of the logarithmic
derivatives theta_j'(0)/theta_j(0).  It is holomorphic in the open upper
half-plane, tends to 1 at infinity, and its zeros there sit on the
imaginary axis exactly at the square roots of the eigenvalues.

Evaluation goes through logarithms of the factors (sums instead of an
n-fold product) so that large n or extreme zeta cannot overflow; the
exponential at the end makes the branch choices of the individual logs
irrelevant for the value.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, GridTooCoarseError, PoleInFactorError
from .jost import LOW_ENERGY_FLOOR, _check_zeta, jost_batch, spectral_start
from .potential import StarPotential

#: an edge factor smaller than this is treated as an exact zero of the
#: factorization, where the vertex factor carries a compensating pole
POLE_EPS = 1e-12


def pd_batch(sp: StarPotential, zetas, tol: float = 1e-10, x_start: float | None = None):
    """Determinant values for a batch of zeta on one side of the cut.

    Returns (D, theta0, dtheta0) with the boundary arrays shaped
    (n_edges, n_zeta).  Raises PoleInFactorError when an edge factor
    vanishes within tolerance; perturb the evaluation point in that case.

    By default the truncation point is chosen per edge and per |zeta| band
    (factor-4 bands above the low-energy floor): small |zeta| tolerates less
    neglected tail and gets a longer interval, large |zeta| steps stiffer
    and gets a shorter one.  An explicit ``x_start`` forces one common start
    for every evaluation (truncation studies).
    """
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    n = sp.n
    theta0 = np.empty((n, len(zetas)), dtype=complex)
    dtheta0 = np.empty_like(theta0)
    if x_start is not None:
        for j, e in enumerate(sp.edges):
            theta0[j], dtheta0[j] = jost_batch(e, zetas, x_start, tol)
    else:
        mags = np.maximum(np.abs(zetas), LOW_ENERGY_FLOOR)
        bands = np.floor(np.log(mags / LOW_ENERGY_FLOOR) / np.log(4.0) + 1e-9).astype(int)
        for b in np.unique(bands):
            sel = bands == b
            floor_b = LOW_ENERGY_FLOOR * 4.0 ** int(b)
            for j, e in enumerate(sp.edges):
                theta0[j, sel], dtheta0[j, sel] = jost_batch(
                    e, zetas[sel], spectral_start(e, floor_b, tol), tol
                )
    small = np.abs(theta0) < POLE_EPS
    if np.any(small):
        j, i = np.argwhere(small)[0]
        raise PoleInFactorError(
            f"edge factor theta_{j}(0, zeta) vanished within {POLE_EPS:g} at "
            f"zeta={zetas[i]}; perturb the evaluation point"
        )
    vertex = np.sum(dtheta0 / theta0, axis=0) / (1j * n * zetas)
    # vertex = 0 happens when a node lands exactly on a zero of D; the log
    # is -inf there and exp carries it back to the honest value 0
    with np.errstate(divide="ignore"):
        log_d = np.log(vertex) + np.sum(np.log(theta0), axis=0)
    return np.exp(log_d), theta0, dtheta0


def perturbation_determinant(
    sp: StarPotential,
    zeta: complex,
    tol: float = 1e-10,
    allow_low_energy: bool = False,
) -> complex:
    """Value of the determinant at a single zeta with Im zeta >= 0."""
    zeta = complex(zeta)
    _check_zeta(zeta, allow_low_energy)
    d, _, _ = pd_batch(sp, np.array([zeta]), tol)
    return complex(d[0])


def unwrap_phase_descending(k: np.ndarray, d_values: np.ndarray) -> np.ndarray:
    """Continuous phase of D along a real grid, anchored to the principal
    argument at the largest |k| where D is close to 1.

    Walks the grid downward, choosing for every step the phase increment in
    (-pi, pi].  An increment close to the branch cut means the grid cannot
    tell a winding from a jump; that is an error, not a guess.
    """
    raw = np.angle(d_values)
    eta = np.empty_like(raw)
    eta[-1] = raw[-1]
    steps = raw[:-1] - raw[1:]
    steps = (steps + np.pi) % (2.0 * np.pi) - np.pi
    if np.any(np.abs(steps) > 3.0):
        i = int(np.argmax(np.abs(steps)))
        raise GridTooCoarseError(
            f"phase increment {steps[i]:+.3f} rad between k={k[i+1]:.6g} and "
            f"k={k[i]:.6g} is too close to the branch cut; refine the grid"
        )
    eta[:-1] = eta[-1] + np.cumsum(steps[::-1])[::-1]
    return eta


@dataclass
class DeterminantScan:
    """Sampled determinant along the positive real axis.

    ``eta`` uses the convention that the phase vanishes at infinity; it is
    unwrapped downward from the largest grid point.
    """

    k: np.ndarray
    d_values: np.ndarray
    amplitude: np.ndarray
    eta: np.ndarray
    vertex_sum: np.ndarray  # K(k) = sum of theta_j'(0)/theta_j(0)
    eta_at_infinity_zero: bool = field(default=True)

    def __post_init__(self):
        if len(self.k) < 16:
            raise ConfigError("a determinant scan needs at least 16 grid points")
        if abs(self.eta[-1]) >= 0.1:
            raise GridTooCoarseError(
                f"|eta(k_max)|={abs(self.eta[-1]):.3f} at k_max={self.k[-1]:.6g}; "
                "the anchor needs D close to 1, increase k_max"
            )

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("k,re_D,im_D,a,eta\n")
            for k, d, a, eta in zip(self.k, self.d_values, self.amplitude, self.eta):
                fh.write(f"{k:.17g},{d.real:.17g},{d.imag:.17g},{a:.17g},{eta:.17g}\n")


def scan(
    sp: StarPotential,
    k_min: float = 0.01,
    k_max: float = 100.0,
    npoints: int = 2000,
    tol: float = 1e-10,
) -> DeterminantScan:
    """Scan the determinant over a geometric grid on [k_min, k_max]."""
    if not (0 < k_min < k_max):
        raise ConfigError("need 0 < k_min < k_max")
    if k_min < LOW_ENERGY_FLOOR:
        raise ConfigError(f"k_min must be at least the low-energy floor {LOW_ENERGY_FLOOR}")
    k = np.geomspace(k_min, k_max, npoints)
    d, theta0, dtheta0 = pd_batch(sp, k.astype(complex), tol)
    eta = unwrap_phase_descending(k, d)
    return DeterminantScan(
        k=k,
        d_values=d,
        amplitude=np.abs(d),
        eta=eta,
        vertex_sum=np.sum(dtheta0 / theta0, axis=0),
    )


def mirrored_scan(sp: StarPotential, sc: DeterminantScan, tol: float = 1e-10):
    """Evaluate the determinant at the mirrored points -k of a scan.

    Returns (d_values, amplitude, eta) on the negative half-axis, with the
    phase unwrapped from the most negative point.  Used by the symmetry
    checks: the determinant at -k must be the conjugate of its value at k.
    """
    zetas = (-sc.k).astype(complex)
    d, _, _ = pd_batch(sp, zetas, tol)
    eta = unwrap_phase_descending(sc.k, d)
    return d, np.abs(d), eta
