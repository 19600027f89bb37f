"""Discrete spectrum and zero-energy resonance of the star operator.

Eigenvalues are the squares zeta**2 = -kappa**2 of the determinant's zeros
i*kappa on the positive imaginary axis.  The determinant is real there, so
odd-order zeros are found by sign-change bracketing; even-order zeros leave
no sign change and are picked up as near-zero local minima whose order is
then counted by a winding integral on a small circle.  A rectangle contour
around the whole axis segment reconciles the total count.

An independent route, a symmetric second-order discretization of the whole
graph with the matching vertex coupling, provides oracle eigenvalues for
cross-checking.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
from scipy.optimize import brentq, minimize_scalar
from scipy.sparse.linalg import eigsh, splu

from .errors import (
    AmbiguousResonanceError,
    ContourThroughZeroError,
    GridTooCoarseError,
    IncompleteSpectrumError,
    NumericFailure,
    PoleInFactorError,
)
from .jost import LOW_ENERGY_FLOOR, zero_energy_solution
from .pdet import pd_batch
from .potential import StarPotential

#: relative singular-value cutoff for the resonance rank decision
RANK_RTOL = 1e-8

#: |Im D(i kappa)| above this fraction of |D| means the axis evaluation
#: cannot be trusted as real
AXIS_IMAG_TOL = 1e-8


@dataclass
class SpectrumResult:
    """Negative eigenvalues with multiplicities, plus the resonance data."""

    eigenvalues: tuple[float, ...]        # ascending (deepest first)
    multiplicities: tuple[int, ...]
    kappas: tuple[float, ...]             # sqrt(|lambda|), same order
    resonance_multiplicity: int

    @property
    def total_multiplicity(self) -> int:
        return int(sum(self.multiplicities))

    def weighted_power_sum(self, s: float) -> float:
        """sum of r_j |lambda_j|**s over the discrete spectrum."""
        return float(sum(r * abs(lam) ** s
                         for lam, r in zip(self.eigenvalues, self.multiplicities)))

    def as_dict(self) -> dict:
        return {
            "eigenvalues": [
                {"lambda": lam, "multiplicity": int(r)}
                for lam, r in zip(self.eigenvalues, self.multiplicities)
            ],
            "resonance_multiplicity": int(self.resonance_multiplicity),
        }


def _d_on_axis(
    sp: StarPotential, kappas: np.ndarray, tol: float, x_start: float | None
) -> np.ndarray:
    """Real values of D(i kappa); asserts the imaginary part is noise."""
    zetas = 1j * np.asarray(kappas, dtype=float)
    try:
        d, _, _ = pd_batch(sp, zetas, tol, x_start)
    except PoleInFactorError:
        # an edge factor vanished exactly on a grid point; nudge and retry
        d, _, _ = pd_batch(sp, zetas * (1.0 + 3e-9), tol, x_start)
    bad = np.abs(d.imag) > AXIS_IMAG_TOL * np.abs(d)
    if np.any(bad):
        i = int(np.argmax(np.abs(d.imag) - AXIS_IMAG_TOL * np.abs(d)))
        raise NumericFailure(
            f"D(i kappa) at kappa={kappas[i]:.6g} has relative imaginary part "
            f"{abs(d.imag[i]) / abs(d[i]):.2e}; expected a real value on the axis"
        )
    return d.real


def _wrapped_increments(phases: np.ndarray) -> np.ndarray:
    steps = np.diff(phases, append=phases[0])
    return (steps + np.pi) % (2.0 * np.pi) - np.pi


def zero_order(
    sp: StarPotential,
    center: complex,
    radius: float,
    tol: float = 1e-10,
    npoints: int = 64,
    x_start: float | None = None,
) -> int:
    """Order of the determinant's zero at ``center`` by the winding of D
    around a circle of the given radius.

    The circle must stay inside the open upper half-plane.  Node counts are
    doubled until adjacent phase increments are unambiguous; a non-integer
    winding means the contour runs too close to a zero.
    """
    center = complex(center)
    if center.imag - radius <= 0:
        raise ContourThroughZeroError(
            "circle dips out of the upper half-plane; shrink the radius"
        )
    shift = 0.0
    while npoints <= 2048:
        angles = 2.0 * np.pi * (np.arange(npoints) + shift) / npoints
        nodes = center + radius * np.exp(1j * angles)
        try:
            d, _, _ = pd_batch(sp, nodes, tol, x_start)
        except PoleInFactorError:
            if shift:
                raise
            shift = 0.381966  # nudge all nodes off the bad point
            continue
        absd = np.abs(d)
        if np.min(absd) < 1e-9 * np.max(absd):
            # one node is orders of magnitude below the rest: the contour
            # runs through a zero, and the winding is luck, not a count
            raise ContourThroughZeroError(
                f"|D|={np.min(absd):.2e} at a node of the circle around "
                f"{center}; a zero sits on the contour"
            )
        inc = _wrapped_increments(np.angle(d))
        if np.max(np.abs(inc)) > 0.5 * np.pi:
            npoints *= 2
            continue
        winding = float(np.sum(inc) / (2.0 * np.pi))
        if abs(winding - round(winding)) > 0.1:
            raise ContourThroughZeroError(
                f"winding {winding:.3f} around {center} is not close to an "
                "integer; the contour probably passes near a zero"
            )
        return int(round(winding))
    # the phase of a holomorphic function along a circle away from its zeros
    # settles under refinement, so exhausting it means a zero sits on (or
    # hugs) the contour
    raise ContourThroughZeroError(
        f"phase increments around {center} stay ambiguous at {npoints // 2} "
        "nodes; a zero lies on or next to the contour"
    )


def _rectangle_winding(
    sp: StarPotential,
    kappa_lo: float,
    kappa_hi: float,
    half_width: float,
    tol: float,
    x_start: float | None,
    n_side: int = 200,
) -> int:
    """Winding of D around the rectangle [-w, w] x [kappa_lo, kappa_hi]."""
    while n_side <= 3200:
        bottom = np.linspace(-half_width, half_width, n_side, endpoint=False)
        right = np.linspace(kappa_lo, kappa_hi, n_side, endpoint=False)
        top = np.linspace(half_width, -half_width, n_side, endpoint=False)
        left = np.linspace(kappa_hi, kappa_lo, n_side, endpoint=False)
        nodes = np.concatenate([
            bottom + 1j * kappa_lo,
            half_width + 1j * right,
            top + 1j * kappa_hi,
            -half_width + 1j * left,
        ])
        d, _, _ = pd_batch(sp, nodes, tol, x_start)
        inc = _wrapped_increments(np.angle(d))
        if np.max(np.abs(inc)) > 0.5 * np.pi:
            n_side *= 2
            continue
        winding = float(np.sum(inc) / (2.0 * np.pi))
        if abs(winding - round(winding)) > 0.1:
            raise ContourThroughZeroError(
                f"rectangle winding {winding:.3f} is not close to an integer"
            )
        return int(round(winding))
    raise GridTooCoarseError("rectangle contour needs more than 3200 nodes per side")


def resonance_multiplicity(sp: StarPotential, tol: float = 1e-12) -> int:
    """Dimension of the space of bounded zero-energy solutions satisfying
    the vertex conditions, decided by a singular-value rank cut.

    Raises AmbiguousResonanceError when singular values land inside the
    band within 10x of the cutoff, reporting both candidate answers.
    """
    n = sp.n
    data = np.array([zero_energy_solution(sp, j, tol) for j in range(n)])
    norms = np.hypot(data[:, 0], data[:, 1])
    u0 = data[:, 0] / norms
    du0 = data[:, 1] / norms
    mat = np.zeros((n, n))
    for j in range(n - 1):
        mat[j, j] = u0[j]
        mat[j, j + 1] = -u0[j + 1]
    mat[n - 1, :] = du0
    sv = np.linalg.svd(mat, compute_uv=False)
    smax = sv[0]
    if smax == 0.0:
        return n
    cutoff = RANK_RTOL * smax
    below = int(np.sum(sv < cutoff))
    in_band = int(np.sum((sv >= cutoff) & (sv < 10.0 * cutoff)))
    if in_band:
        raise AmbiguousResonanceError(
            f"singular values {sv.tolist()} straddle the rank cutoff "
            f"{cutoff:.3e}; multiplicity is {below} or {below + in_band}",
            candidates=(below, below + in_band),
        )
    return below


def find_eigenvalues(
    sp: StarPotential,
    kappa_max: float | None = None,
    tol: float = 1e-10,
    ngrid: int = 800,
) -> SpectrumResult:
    """Locate all determinant zeros on the imaginary axis and their orders.

    ``kappa_max`` defaults to a bound from the potential depth: the
    quadratic form is bounded below by -sup|v|, so kappa cannot exceed its
    square root.  The result is cross-checked against the winding of D
    around the enclosing rectangle; a mismatch triggers one grid refinement
    and then an IncompleteSpectrumError.
    """
    if kappa_max is None:
        kappa_max = math.sqrt(sp.sup_abs()) * 1.05 + 0.3
    kappa_max = max(kappa_max, 20 * LOW_ENERGY_FLOOR)
    # truncation is left to pd_batch's banded default; grid values and
    # scalar refinements at the same kappa then agree bit for bit
    x_start = None

    for attempt in range(2):
        found = _locate_axis_zeros(sp, kappa_max, tol, ngrid, x_start)
        total = sum(r for _, r in found)
        winding = _rectangle_winding(
            sp, LOW_ENERGY_FLOOR, kappa_max * 1.02 + 0.1, 0.3, tol, x_start
        )
        if winding == total:
            break
        if attempt == 0:
            ngrid *= 3
        else:
            raise IncompleteSpectrumError(
                f"axis search found total order {total} but the enclosing "
                f"contour winds {winding} times; the grid cannot see some zero"
            )

    kappas = tuple(k for k, _ in found)
    mult = tuple(r for _, r in found)
    lams = tuple(-k * k for k in kappas)
    m_res = resonance_multiplicity(sp)
    return SpectrumResult(
        eigenvalues=lams,
        multiplicities=mult,
        kappas=kappas,
        resonance_multiplicity=m_res,
    )


def _locate_axis_zeros(sp, kappa_max, tol, ngrid, x_start):
    """Zeros (kappa, order) on the axis segment, sorted by descending kappa."""
    lo = 2.0 * LOW_ENERGY_FLOOR
    grid = np.linspace(lo, kappa_max, ngrid)
    f = _d_on_axis(sp, grid, tol, x_start)
    h = grid[1] - grid[0]

    def f_scalar(kappa: float) -> float:
        return float(_d_on_axis(sp, np.array([kappa]), tol, x_start)[0])

    roots: list[float] = []
    sign_change = np.where(np.sign(f[:-1]) * np.sign(f[1:]) < 0)[0]
    for i in sign_change:
        roots.append(brentq(f_scalar, grid[i], grid[i + 1], xtol=max(tol, 1e-12)))

    # even-order zeros: |f| dips toward zero without changing sign
    absf = np.abs(f)
    candidates: list[float] = []
    for i in range(1, ngrid - 1):
        if not (absf[i] < absf[i - 1] and absf[i] < absf[i + 1]):
            continue
        window = absf[max(0, i - 25): i + 25]
        if absf[i] > 0.05 * np.max(window):
            continue
        if any(abs(grid[i] - r) < 3 * h for r in roots):
            continue
        res = minimize_scalar(
            lambda kappa: abs(f_scalar(kappa)),
            bounds=(grid[max(0, i - 2)], grid[min(ngrid - 1, i + 2)]),
            method="bounded",
            options={"xatol": 1e-10},
        )
        candidates.append(float(res.x))

    zeros: list[tuple[float, int]] = []
    centers = sorted(roots + candidates)
    for k0 in centers:
        gap = min(
            [abs(k0 - other) for other in centers if other != k0] or [math.inf]
        )
        radius = min(0.45 * gap, 0.45 * k0, max(0.02, 4 * h))
        order = zero_order(sp, 1j * k0, radius, tol, x_start=x_start)
        if order > 0:
            zeros.append((k0, order))

    zeros.sort(key=lambda t: -t[0])
    return zeros


def oracle_eigenvalues(
    sp: StarPotential,
    h: float = 0.01,
    x_max: float | None = None,
    cluster_rtol: float = 1e-6,
) -> list[tuple[float, int]]:
    """Negative eigenvalues by a symmetric second-order discretization.

    One shared vertex value plus interior chains per edge; the coupling row
    encodes continuity (shared unknown) and the derivative-sum condition
    (natural boundary term of the quadratic form).  Mass lumping keeps the
    problem symmetric.  Returns (eigenvalue, multiplicity) pairs with
    eigenvalues clustered at relative tolerance ``cluster_rtol``.

    The default domain length is capped at 300 so slowly decaying tails do
    not blow up the matrix; states shallower than kappa ~ 0.02 need an
    explicit larger ``x_max``.
    """
    if x_max is None:
        x_max = min(sp.x_infinity(), 300.0)
    n = sp.n
    npts = int(round(x_max / h))
    h = x_max / npts
    inner = npts - 1
    size = 1 + n * inner

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    lumped = np.empty(size)
    lumped[0] = n * h / 2.0
    v_at_vertex = sum(e.eval_deriv(0.0, 0) for e in sp.edges)
    diag0 = n / h + (h / 2.0) * v_at_vertex

    rows.append(np.array([0]))
    cols.append(np.array([0]))
    vals.append(np.array([diag0]))
    for j, e in enumerate(sp.edges):
        base = 1 + j * inner
        xs = h * np.arange(1, npts)
        idx = base + np.arange(inner)
        lumped[idx] = h
        rows.append(idx)
        cols.append(idx)
        vals.append(2.0 / h + h * e.eval_deriv(xs, 0))
        rows.append(idx[:-1])
        cols.append(idx[1:])
        vals.append(np.full(inner - 1, -1.0 / h))
        rows.append(idx[1:])
        cols.append(idx[:-1])
        vals.append(np.full(inner - 1, -1.0 / h))
        rows.append(np.array([0, idx[0]]))
        cols.append(np.array([idx[0], 0]))
        vals.append(np.array([-1.0 / h, -1.0 / h]))

    K = sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(size, size),
    ).tocsr()
    scale = 1.0 / np.sqrt(lumped)
    C = sparse.diags(scale) @ K @ sparse.diags(scale)

    sup = sp.sup_abs()
    sigma = -sup - 1.0
    C = C.tocsc()
    k = 8
    # deterministic start vector without the edge-permutation symmetry,
    # which would leave degenerate antisymmetric modes invisible
    v0 = 1.0 + 0.3 * np.cos(0.7 * np.arange(size))
    v0 /= np.linalg.norm(v0)
    while True:
        k = min(k, size - 2)
        vals_found = eigsh(C, k=k, sigma=sigma, which="LM",
                           v0=v0, return_eigenvectors=False)
        vals_found = np.sort(vals_found)
        if vals_found[-1] >= 0.0 or k == size - 2:
            break
        k *= 2

    negs = [float(lam) for lam in vals_found if lam < -1e-8 * max(1.0, sup)]
    negs.sort()
    clustered: list[tuple[float, int]] = []
    for lam in negs:
        if clustered and abs(lam - clustered[-1][0]) <= cluster_rtol * max(abs(lam), 1e-3):
            prev, r = clustered[-1]
            clustered[-1] = ((prev * r + lam) / (r + 1), r + 1)
        else:
            clustered.append((lam, 1))
    # a Krylov run from one vector under-reports true multiplicity, so put
    # each cluster through a block inverse iteration near its value
    block = max(6, n + 2)
    out: list[tuple[float, int]] = []
    for lam, _ in clustered:
        out.append((lam, _cluster_multiplicity(C, lam, block)))
    return out


def _cluster_multiplicity(C: sparse.csc_matrix, theta: float, block: int) -> int:
    """Count eigenvalues of C in a tight cluster around ``theta`` by block
    inverse iteration with a shift just off the cluster."""
    size = C.shape[0]
    block = min(block, size - 1)
    sigma = theta + max(1e-6 * abs(theta), 1e-8)
    ident = sparse.identity(size, format="csc")
    lu = splu((C - sigma * ident).tocsc())
    rng = np.random.default_rng(20230814)
    x = rng.standard_normal((size, block))
    for _ in range(3):
        x = lu.solve(x)
        x, _ = np.linalg.qr(x)
    t = x.T @ (C @ x)
    ritz = np.linalg.eigvalsh(0.5 * (t + t.T))
    tol = max(1e-4 * abs(theta), 1e-7)
    return int(np.sum(np.abs(ritz - theta) <= tol))
