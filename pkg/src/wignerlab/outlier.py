"""Outlier prediction, the resolvent-block matrices and the determinant criterion."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import spectral as sp
from .ensemble import Deformation


@dataclass(frozen=True)
class SpikePrediction:
    theta: float
    multiplicity: int
    rho: float
    c_theta: float
    scale: float  # -1/g'(rho) = theta^2 - sigma^2
    indices: tuple  # 0-based positions in the descending spectrum of M


@dataclass(frozen=True)
class OutlierPrediction:
    sigma: float
    N: int
    positive: tuple = ()
    negative: tuple = ()
    top_edge_index: int | None = None  # first eigenvalue expected at +2 sigma
    bottom_edge_index: int | None = None

    @property
    def J_plus(self):
        return len(self.positive)

    @property
    def J_minus(self):
        return len(self.negative)

    @property
    def k_plus(self):
        return sum(p.multiplicity for p in self.positive)

    @property
    def spikes(self):
        return self.positive + self.negative

    def expected_top(self):
        """Predicted limit of the largest eigenvalue."""
        return self.positive[0].rho if self.positive else 2 * self.sigma


def predict_outliers(deformation: Deformation, sigma=1.0) -> OutlierPrediction:
    """Limits of the extreme eigenvalues of ``X + A``.

    Spikes with ``theta > sigma`` produce outliers at ``rho(theta)`` on the
    top positions in spike order; spikes with ``theta < -sigma`` fill the
    bottom positions; everything else sticks to ``+-2 sigma``.
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    N = deformation.N
    pos, neg = [], []
    start = 0
    for theta, k in deformation.spikes:
        if theta > sigma:
            pos.append(_spike(theta, k, sigma, tuple(range(start, start + k))))
            start += k
    end = N
    for theta, k in reversed(deformation.spikes):
        if theta < -sigma:
            neg.insert(0, _spike(theta, k, sigma, tuple(range(end - k, end))))
            end -= k
    top = start if start < N else None
    bottom = end - 1 if end - 1 >= start else None
    return OutlierPrediction(sigma, N, tuple(pos), tuple(neg), top, bottom)


def _spike(theta, k, sigma, idx):
    return SpikePrediction(
        theta, k, sp.rho(theta, sigma), sp.c_theta(theta, sigma), theta**2 - sigma**2, idx
    )


# ---------------------------------------------------------------------------
# resolvent blocks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class XiBlock:
    """``sqrt(N) (U* R(x) U - center I)`` for one spike block."""

    matrix: np.ndarray
    x: float
    N: int
    asymmetry: float

    def eigenvalues(self):
        """Descending eigenvalues."""
        return np.linalg.eigvalsh(self.matrix)[::-1]


def xi_matrix(X, U_block, x, theta=None, *, sigma=1.0, tol=None, spectrum=None, resolvent=None) -> XiBlock:
    """Scaled resolvent block at the real point ``x``.

    The diagonal is centred by ``1/theta`` when ``theta`` is given (the
    per-spike block evaluated at ``rho(theta)``), otherwise by ``g_sigma(x)``.
    The block is symmetrised with its adjoint; the discarded asymmetry is
    returned for diagnostics.
    """
    X = np.asarray(X)
    N = X.shape[0]
    U_block = np.asarray(U_block).reshape(N, -1)
    R = resolvent if resolvent is not None else sp.Resolvent(X, x, tol, spectrum)
    B = R.block(U_block)
    asym = float(np.max(np.abs(B - B.conj().T))) if B.size else 0.0
    if asym > 1e-9 * max(1.0, float(np.max(np.abs(B)))):
        raise sp.SpectralError(f"resolvent block asymmetry {asym:.3g} exceeds 1e-9")
    B = (B + B.conj().T) / 2
    center = 1.0 / theta if theta is not None else sp.stieltjes(x, sigma)
    Xi = math.sqrt(N) * (B - center * np.eye(B.shape[0]))
    return XiBlock(Xi, float(x), N, asym)


def master_det(X, deformation: Deformation, x, *, tol=None, spectrum=None):
    """``det(I_r - Theta U* R(x) U)``; vanishes exactly on Sp(X + A) \\ Sp(X)."""
    R = sp.Resolvent(X, x, tol, spectrum)
    r = deformation.r
    if r == 0:
        return 1.0
    B = np.eye(r) - deformation.thetas[:, None] * R.block(deformation.U)
    d = np.linalg.det(B)
    return float(d.real) if abs(d.imag) <= 1e-14 * max(1.0, abs(d)) else complex(d)


def master_det_condition(X, deformation: Deformation, x, M_norm=None, spectrum=None):
    """Sensitivity scale of ``master_det`` to an O(eps) error in ``x``.

    ``||Theta|| ||R||^2 (1 + ||Theta|| ||R||)^(r-1) (1 + ||M||)`` with
    ``||R|| = 1/dist(x, Sp X)``.
    """
    w = sp.eigvals_desc(X) if spectrum is None else np.asarray(spectrum)
    rn = 1.0 / float(np.min(np.abs(w - x)))
    tn = float(np.max(np.abs(deformation.thetas))) if deformation.r else 0.0
    mn = float(np.max(np.abs(w))) + tn if M_norm is None else M_norm
    return tn * rn**2 * (1 + tn * rn) ** max(deformation.r - 1, 0) * (1 + mn)


def z_matrix(deformation: Deformation, xi_full, N):
    """``Z_N(x) = Theta^-1 - Xi_N(x) / sqrt(N)`` for the full r x r block."""
    th = deformation.thetas
    if np.any(th == 0):
        raise ValueError("singular Theta")
    Xi = np.asarray(xi_full.matrix if isinstance(xi_full, XiBlock) else xi_full)
    Z = np.diag(1.0 / th) - Xi / math.sqrt(N)
    return (Z + Z.conj().T) / 2


def z_matrix_at(X, deformation: Deformation, x, sigma=1.0, **kw):
    """Convenience: build ``Xi_N(x)`` on all r columns and return ``Z_N(x)``."""
    xi = xi_matrix(X, deformation.U, x, sigma=sigma, **kw)
    return z_matrix(deformation, xi, X.shape[0])


def prop1_residuals(spectral, X, deformation: Deformation, j, sigma=1.0, *, prediction=None, tol=None, spectrum=None):
    """``sqrt(N) (lambda_i - rho_j) + y_i / g'(rho_j)`` for the k_j outliers of spike j.

    ``spectral`` holds the descending eigenvalues of M (a SpectralData or an
    array). ``y`` are the descending eigenvalues of the per-spike resolvent
    block at ``rho_j``.
    """
    theta, k = deformation.spikes[j]
    if not theta > sigma:
        raise ValueError(f"spike {j} (theta={theta}) is not above sigma={sigma}")
    lam = np.asarray(getattr(spectral, "eigenvalues", spectral))
    pred = prediction or predict_outliers(deformation, sigma)
    sp_j = next(p for p in pred.positive if p.theta == theta)
    N = X.shape[0]
    r = sp.rho(theta, sigma)
    xi = xi_matrix(X, deformation.U[:, deformation.columns(j)], r, theta, sigma=sigma, tol=tol, spectrum=spectrum)
    y = xi.eigenvalues()
    gp = sp.stieltjes_deriv(r, sigma)
    lam_j = lam[list(sp_j.indices)]
    return math.sqrt(N) * (lam_j - r) + y / gp


# ---------------------------------------------------------------------------
# zeta scan window
# ---------------------------------------------------------------------------


def smoothstep(t):
    """Septic smoothstep, C^3 at both ends: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(t, 0.0, 1.0)
    return t**4 * (35 - 84 * t + 70 * t**2 - 20 * t**3)


@dataclass(frozen=True)
class ResolventWindow:
    sigma: float
    delta: float
    L: float
    grid: np.ndarray = field(repr=False)

    def h(self, x):
        """Cutoff: 1 on ``|x| <= 2 sigma + delta/2``, 0 beyond ``2 sigma + delta``.

        Between the two the transition is the septic smoothstep in
        ``(2 sigma + delta - |x|) / (delta / 2)``.
        """
        a = 2 * self.sigma + self.delta
        return smoothstep((a - np.abs(np.asarray(x, float))) / (self.delta / 2))


def make_window(deformation: Deformation, sigma=1.0, N=None, delta=None, step=None) -> ResolventWindow:
    """Window ``[2 sigma + 2 delta, L]`` with ``L = max theta + 2 sigma + 2 delta``.

    ``delta`` starts at ``sigma/4`` (or the given value) and is halved until
    every super-critical theta exceeds ``1 / g(2 sigma + 2 delta)``. The grid
    step defaults to ``N^(-1/3)``.
    """
    delta = 0.25 * sigma if delta is None else float(delta)
    thetas = [t for t, _ in deformation.spikes if t > sigma]
    while thetas and not all(t > 1 / sp.stieltjes(2 * sigma + 2 * delta, sigma) for t in thetas):
        delta /= 2
        if delta < 1e-12:
            raise ValueError("could not find a valid delta")
    L = (max(thetas) if thetas else sigma) + 2 * sigma + 2 * delta
    N = deformation.N if N is None else N
    h = N ** (-1 / 3) if step is None else step
    x0 = 2 * sigma + 2 * delta
    grid = x0 + h * np.arange(int(math.floor((L - x0) / h + 1e-12)) + 1)
    if grid[-1] < L - 1e-12:
        grid = np.append(grid, L)
    return ResolventWindow(sigma, delta, L, grid)


@dataclass(frozen=True)
class ZetaScan:
    max_abs: float
    argmax: float
    values: np.ndarray = field(repr=False)


def zeta_values(X, grid, u, v, sigma=1.0, spectrum=None):
    """``zeta_N(x) = -sqrt(N) (<u, R(x)^2 v> + g'(x) <u, v>)`` on the grid."""
    N = X.shape[0]
    uv = np.vdot(u, v)
    out = np.empty(len(grid))
    for i, x in enumerate(grid):
        q = sp.resolvent_bilinear_sq(X, x, u, v, spectrum=spectrum)
        out[i] = np.real(-math.sqrt(N) * (q + sp.stieltjes_deriv(x, sigma) * uv))
    return out


def zeta_scan(X, window: ResolventWindow, u, v, sigma=1.0, spectrum=None) -> ZetaScan:
    grid = np.asarray(window.grid)
    if grid.size == 0:
        raise ValueError("empty grid")
    vals = zeta_values(X, grid, u, v, sigma, spectrum)
    i = int(np.argmax(np.abs(vals)))
    return ZetaScan(float(abs(vals[i])), float(grid[i]), vals)
