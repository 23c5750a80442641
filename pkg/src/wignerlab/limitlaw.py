"""Samplers for the limiting laws of outlier fluctuations and resolvent forms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import spectral as sp
from .ensemble import EntryLaw, WindowOverride, default_diag_law, resolve_entry_law
from .rng import as_generator


class LimitLawError(ValueError):
    pass


@dataclass(frozen=True)
class CaseALimitSpec:
    """Localized-eigenvector limit ``V = U* (W + H) U``.

    ``U`` is the K x k coordinate block of the spike's eigenvectors.
    ``corner_laws`` optionally maps ``(s, t)``, ``s <= t < K``, to the laws of
    the fixed entries of W (defaults to offdiag/diag laws). ``kappa4`` is a
    scalar or one value per row s (the non-i.i.d. variant).
    """

    theta: float
    sigma: float
    U: np.ndarray
    offdiag_law: EntryLaw
    diag_law: EntryLaw
    beta: int = 1
    kappa4: object = None
    corner_laws: dict | None = None

    def __post_init__(self):
        if not self.theta > self.sigma:
            raise LimitLawError("theta must exceed sigma")
        U = np.atleast_2d(np.asarray(self.U))
        if U.shape[0] == 1 and np.ndim(self.U) == 1:
            U = U.T
        object.__setattr__(self, "U", U)
        if self.kappa4 is None:
            object.__setattr__(self, "kappa4", self.offdiag_law.fourth_cumulant)
        if np.any(self.h_diag_variances() < 0):
            raise LimitLawError("negative diagonal H variance: kappa4/theta^2 + (2/beta) sigma^4/(theta^2 - sigma^2) < 0")

    @property
    def K(self):
        return self.U.shape[0]

    @property
    def k(self):
        return self.U.shape[1]

    def h_diag_variances(self):
        k4 = np.broadcast_to(np.asarray(self.kappa4, float), (self.U.shape[0],))
        t2, s2 = self.theta**2, self.sigma**2
        return k4 / t2 + (2 / self.beta) * s2**2 / (t2 - s2)

    def h_offdiag_variance(self):
        """E|H_st|^2 (real and imaginary parts each carry half in the Hermitian case)."""
        t2, s2 = self.theta**2, self.sigma**2
        return s2**2 / (t2 - s2)


def _law(laws, key, default):
    return laws.get(key, default) if laws else default


def _sample_wigner_block(rng, size, K, offdiag_law, diag_law, beta, corner_laws=None):
    """Unscaled K x K Wigner corners, shape (size, K, K)."""
    W = np.zeros((size, K, K), dtype=complex if beta == 2 else float)
    for s in range(K):
        W[:, s, s] = np.real(_law(corner_laws, (s, s), diag_law).sample(rng, size))
        for t in range(s + 1, K):
            w = _law(corner_laws, (s, t), offdiag_law).sample(rng, size)
            W[:, s, t] = w
            W[:, t, s] = np.conj(w)
    return W


def _gaussian_sym(rng, size, K, diag_var, off_var, beta):
    """Symmetric/Hermitian Gaussian blocks with given diagonal and off-diagonal E|.|^2."""
    diag_var = np.broadcast_to(np.asarray(diag_var, float), (K,))
    G = np.zeros((size, K, K), dtype=complex if beta == 2 else float)
    iu = np.triu_indices(K, 1)
    n_off = len(iu[0])
    if beta == 2:
        off = (rng.standard_normal((size, n_off)) + 1j * rng.standard_normal((size, n_off))) * math.sqrt(off_var / 2)
    else:
        off = rng.standard_normal((size, n_off)) * math.sqrt(off_var)
    G[:, iu[0], iu[1]] = off
    G[:, iu[1], iu[0]] = np.conj(off)
    d = rng.standard_normal((size, K)) * np.sqrt(diag_var)
    G[:, np.arange(K), np.arange(K)] = d
    return G


def _desc_eigs(V):
    return np.linalg.eigvalsh(V)[:, ::-1]


def sample_Vj(spec: CaseALimitSpec, rng, size=1):
    """Draws of the descending eigenvalues of ``U* (W + H) U``; shape (size, k)."""
    rng = as_generator(rng)
    W = _sample_wigner_block(rng, size, spec.K, spec.offdiag_law, spec.diag_law, spec.beta, spec.corner_laws)
    H = _gaussian_sym(rng, size, spec.K, spec.h_diag_variances(), spec.h_offdiag_variance(), spec.beta)
    U = spec.U
    V = np.einsum("ia,nij,jb->nab", U.conj(), W + H, U)
    return _desc_eigs(V)


def case_a_variance(spec: CaseALimitSpec):
    """Exact variance of the 1 x 1 limit ``u* (W + H) u`` (k = 1)."""
    if spec.k != 1:
        raise LimitLawError("closed-form variance only for k = 1")
    u = np.abs(spec.U[:, 0]) ** 2
    hd = spec.h_diag_variances()
    ho = spec.h_offdiag_variance()
    # a pair (s, t) enters as 2 Re(conj(U_s) U_t M_st): weight 4 real, 2 complex
    pair = 4 if spec.beta == 1 else 2
    total = 0.0
    for s in range(spec.K):
        total += u[s] ** 2 * (_law(spec.corner_laws, (s, s), spec.diag_law).variance + hd[s])
        for t in range(s + 1, spec.K):
            total += pair * u[s] * u[t] * (_law(spec.corner_laws, (s, t), spec.offdiag_law).variance + ho)
    return float(total)


def goe_block_variance(theta, sigma):
    """Off-diagonal entry variance ``theta^2 sigma^2 / (theta^2 - sigma^2)``."""
    if not theta > sigma:
        raise LimitLawError("theta must exceed sigma")
    return theta**2 * sigma**2 / (theta**2 - sigma**2)


def sample_goe_block(k, theta, sigma, beta, rng, size=1):
    """Descending eigenvalues of a k x k GOE/GUE.

    Off-diagonal E|.|^2 is ``v = goe_block_variance``; the diagonal variance
    is ``(2/beta) v``.
    """
    if k < 1:
        raise LimitLawError("k must be >= 1")
    v = goe_block_variance(theta, sigma)
    G = _gaussian_sym(as_generator(rng), size, k, (2 / beta) * v, v, beta)
    return _desc_eigs(G)


@dataclass(frozen=True)
class UpsilonSpec:
    """Limit field ``Upsilon(x) = g^2 (W_K + Y(x))`` on a K x K corner."""

    x: float
    sigma: float
    K: int
    beta: int = 1
    offdiag_law: EntryLaw | None = None
    diag_law: EntryLaw | None = None
    kappa4: float | None = None

    def __post_init__(self):
        if abs(self.x) <= 2 * self.sigma:
            raise LimitLawError("x must lie off the support")
        if self.offdiag_law is None:
            object.__setattr__(
                self,
                "offdiag_law",
                resolve_entry_law({"kind": "gaussian", "variance": self.sigma**2, "complex": self.beta == 2}),
            )
        if self.diag_law is None:
            object.__setattr__(self, "diag_law", default_diag_law(self.sigma**2, self.beta))
        if self.kappa4 is None:
            object.__setattr__(self, "kappa4", self.offdiag_law.fourth_cumulant)
        if self.y_diag_variance() < 0:
            raise LimitLawError("negative variance for Y_ii")

    def y_diag_variance(self):
        g = sp.stieltjes(self.x, self.sigma)
        gp = sp.stieltjes_deriv(self.x, self.sigma)
        return self.kappa4 * g**2 - (2 / self.beta) * self.sigma**4 * gp

    def y_offdiag_variance(self):
        return -self.sigma**4 * sp.stieltjes_deriv(self.x, self.sigma)


def sample_upsilon(spec: UpsilonSpec, rng, size=1):
    """Draws of the K x K matrix ``Upsilon(x)``; shape (size, K, K)."""
    rng = as_generator(rng)
    g = sp.stieltjes(spec.x, spec.sigma)
    W = _sample_wigner_block(rng, size, spec.K, spec.offdiag_law, spec.diag_law, spec.beta)
    Y = _gaussian_sym(rng, size, spec.K, spec.y_diag_variance(), spec.y_offdiag_variance(), spec.beta)
    return g**2 * (W + Y)


def upsilon_form_variance(spec: UpsilonSpec, u):
    """Variance of ``<u, Upsilon(x) u>`` for a real vector u of length K."""
    u2 = np.abs(np.asarray(u)) ** 2
    pair = 2 if spec.beta == 1 else 1
    g4 = sp.stieltjes(spec.x, spec.sigma) ** 4
    diag = np.sum(u2**2) * (spec.diag_law.variance + spec.y_diag_variance())
    off = (np.sum(u2) ** 2 - np.sum(u2**2)) * pair * (spec.offdiag_law.variance + spec.y_offdiag_variance())
    return float(g4 * (diag + off))


def kappa4_row(window: WindowOverride, i, beta=1, base_law: EntryLaw | None = None):
    """Row-limit fourth cumulant ``m4(i) - (4 - beta) sigma^4``.

    ``m4(i)`` averages ``E|W_il|^4`` over the row; entries in the K x K
    corner are a vanishing fraction and do not contribute. Rows without an
    override use ``base_law``.
    """
    pieces = window.rows.get(i)
    if not pieces:
        if base_law is None:
            raise LimitLawError(f"row {i} has no override and no base law")
        pieces = [(1.0, base_law)]
    variances = {round(law.variance, 12) for _, law in pieces}
    if len(variances) != 1:
        raise LimitLawError("row laws must share the variance sigma^2")
    s2 = pieces[0][1].variance
    m4 = sum(fr * law.fourth_abs_moment for fr, law in pieces)
    return float(m4 - (4 - beta) * s2**2)
