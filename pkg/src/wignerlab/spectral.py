"""Dense self-adjoint eigensolving, resolvent bilinear forms and semicircle analytics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.linalg import lapack


class SpectralError(ArithmeticError):
    """Eigensolver failure or a resolvent evaluated too close to the spectrum."""


# ---------------------------------------------------------------------------
# eigensolver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SpectralData:
    """Eigenvalues in descending order, optionally with eigenvectors (as columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    max_residual: float = float("nan")
    orthogonality_error: float = float("nan")

    def __len__(self):
        return len(self.eigenvalues)


def _check_matrix(M):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise SpectralError(f"expected a square matrix, got shape {M.shape}")
    if not np.all(np.isfinite(M)):
        raise SpectralError("matrix contains NaN or inf entries")
    return M


def eig_sym(M, want_vectors=False, subset=None) -> SpectralData:
    """Full spectrum of a self-adjoint matrix, largest eigenvalue first.

    LAPACK's symmetric drivers (Householder tridiagonalisation followed by
    a tridiagonal solver) do the work. ``subset=(lo, hi)`` restricts to the
    descending positions ``lo..hi`` inclusive.
    """
    M = _check_matrix(M)
    n = M.shape[0]
    kwargs = {}
    if subset is not None:
        lo, hi = subset
        kwargs["subset_by_index"] = [n - 1 - hi, n - 1 - lo]
    try:
        if want_vectors:
            w, V = linalg.eigh(M, check_finite=False, **kwargs)
        else:
            w = linalg.eigh(M, eigvals_only=True, check_finite=False, **kwargs)
            V = None
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise SpectralError(f"eigensolver did not converge: {exc}") from exc
    w = w[::-1].copy()
    if V is None:
        return SpectralData(w)
    V = V[:, ::-1].copy()
    resid = float(np.max(np.linalg.norm(M @ V - V * w, axis=0))) if len(w) else 0.0
    ortho = float(np.max(np.abs(V.conj().T @ V - np.eye(V.shape[1])))) if len(w) else 0.0
    return SpectralData(w, V, resid, ortho)


def eigvals_desc(M):
    return eig_sym(M).eigenvalues


def spectral_apply(X, f):
    """``f(X) = V f(Lambda) V*`` via the eigendecomposition."""
    sd = eig_sym(X, want_vectors=True)
    vals = np.asarray(f(sd.eigenvalues))
    V = sd.eigenvectors
    return (V * vals) @ V.conj().T


# ---------------------------------------------------------------------------
# symmetric indefinite factorisation, inertia and resolvent solves
# ---------------------------------------------------------------------------


def _inertia_from_ldl(ldu, ipiv):
    """Number of negative eigenvalues of the block-diagonal factor D (lower storage)."""
    n = len(ipiv)
    neg = 0
    i = 0
    while i < n:
        if ipiv[i] < 0 and i + 1 < n:
            a, b, c = ldu[i, i].real, ldu[i + 1, i], ldu[i + 1, i + 1].real
            det = a * c - abs(b) ** 2
            if det < 0:
                neg += 1
            elif a + c < 0:
                neg += 2
            i += 2
        else:
            neg += ldu[i, i].real < 0
            i += 1
    return int(neg)


def count_eigenvalues_above(X, x):
    """Number of eigenvalues of ``X`` strictly greater than real ``x``.

    Sylvester's law of inertia on an LDL* factorisation of ``x I - X``.
    """
    X = np.asarray(X)
    A = x * np.eye(X.shape[0]) - X
    if np.iscomplexobj(A):
        ldu, ipiv, info = lapack.zhetrf(A, lower=1)
    else:
        ldu, ipiv, info = lapack.dsytrf(A, lower=1)
    if info > 0:  # exactly singular pivot: x is an eigenvalue, count as "not above"
        w = np.linalg.eigvalsh(X)
        return int(np.sum(w > x))
    return _inertia_from_ldl(ldu, ipiv)


def spectral_gap_ok(X, x, tol, spectrum=None):
    """True when the real point ``x`` is at distance > tol from Sp(X)."""
    if spectrum is not None:
        return bool(np.min(np.abs(np.asarray(spectrum) - x)) > tol)
    return count_eigenvalues_above(X, x - tol) == count_eigenvalues_above(X, x + tol)


def default_tol(X, rel=1e-8):
    """``rel * ||X||_F`` (the Frobenius norm bounds the spectral norm), at least ``rel``."""
    return rel * max(float(np.linalg.norm(X)), 1.0)


class Resolvent:
    """Factorised ``z I - X`` for repeated solves.

    Real ``z`` uses a symmetric (Hermitian) indefinite factorisation; complex
    ``z`` an LU factorisation. Construction enforces ``dist(z, Sp X) > tol``.
    """

    def __init__(self, X, z, tol=None, spectrum=None):
        X = _check_matrix(X)
        self.X, self.z = X, z
        n = X.shape[0]
        tol = default_tol(X) if tol is None else tol
        zc = complex(z)
        if abs(zc.imag) <= tol and not spectral_gap_ok(X, zc.real, tol, spectrum):
            raise SpectralError(f"z={z} lies within {tol:.3g} of the spectrum")
        self.real_axis = zc.imag == 0
        if self.real_axis:
            A = zc.real * np.eye(n) - X
            if np.iscomplexobj(A):
                self._ldu, self._ipiv, info = lapack.zhetrf(A, lower=1)
                self._trs = lapack.zhetrs
            else:
                self._ldu, self._ipiv, info = lapack.dsytrf(A, lower=1)
                self._trs = lapack.dsytrs
            self._lu = None
        else:
            A = zc * np.eye(n) - X
            self._lu = linalg.lu_factor(A, check_finite=False)
            info = 0
        if info > 0:
            raise SpectralError(f"singular factorisation at z={z}")

    def solve(self, b):
        b = np.asarray(b)
        if self._lu is not None:
            return linalg.lu_solve(self._lu, b, check_finite=False)
        dtype = np.result_type(self._ldu.dtype, b.dtype)
        rhs = b.reshape(b.shape[0], -1).astype(dtype, copy=True)
        if dtype != self._ldu.dtype:  # complex rhs on a real factor
            re, _ = self._trs(self._ldu, self._ipiv, rhs.real.copy(), lower=1)
            im, _ = self._trs(self._ldu, self._ipiv, rhs.imag.copy(), lower=1)
            x = re + 1j * im
        else:
            x, info = self._trs(self._ldu, self._ipiv, rhs, lower=1)
            if info:
                raise SpectralError("triangular solve failed")
        return x.reshape(b.shape)

    def block(self, U, V=None):
        """``U* R(z) V`` (V defaults to U)."""
        V = U if V is None else V
        return U.conj().T @ self.solve(V)


def _unit(u, check):
    u = np.asarray(u)
    if check and not math.isclose(float(np.linalg.norm(u)), 1.0, rel_tol=1e-10):
        raise ValueError("vector is not unit norm")
    return u


def resolvent_bilinear(X, z, u, v, *, unit=False, tol=None, spectrum=None):
    """``<u, R(z) v>`` with ``R(z) = (z I - X)^-1``, via one solve."""
    u, v = _unit(u, unit), _unit(v, unit)
    w = Resolvent(X, z, tol, spectrum).solve(v)
    return complex(np.vdot(u, w)) if np.iscomplexobj(w) or np.iscomplexobj(u) else float(u @ w)


def resolvent_bilinear_sq(X, x, u, v, *, unit=False, tol=None, spectrum=None):
    """``<u, R(x)^2 v>`` via two chained solves on one factorisation."""
    u, v = _unit(u, unit), _unit(v, unit)
    R = Resolvent(X, x, tol, spectrum)
    w = R.solve(R.solve(v))
    return complex(np.vdot(u, w)) if np.iscomplexobj(w) or np.iscomplexobj(u) else float(u @ w)


# ---------------------------------------------------------------------------
# semicircle analytics
# ---------------------------------------------------------------------------


def _check_sigma(sigma):
    if not sigma > 0:
        raise ValueError("sigma must be positive")


def _sqrt_branch(z, sigma):
    """``s(z) = z sqrt(1 - 4 sigma^2 / z^2)``, principal root; s ~ z at infinity."""
    return z * np.sqrt(1 - 4 * sigma**2 / (z * z))


def _off_support(z, sigma):
    z = np.asarray(z, dtype=complex)
    bad = (z.imag == 0) & (np.abs(z.real) <= 2 * sigma)
    if np.any(bad):
        raise ValueError(f"z on the support [-{2 * sigma}, {2 * sigma}]")
    return z


def _realify(out, z):
    return out.real if np.isrealobj(z) else out


def stieltjes(z, sigma=1.0):
    """Stieltjes transform ``g(z) = int dmu_sc(x) / (z - x)`` of the semicircle law.

    Evaluated as ``2 / (z + s(z))``, which equals ``(z - s) / (2 sigma^2)``
    without the cancellation at large ``|z|``.

    >>> float(stieltjes(2.5))
    0.5
    """
    _check_sigma(sigma)
    zc = _off_support(z, sigma)
    g = 2.0 / (zc + _sqrt_branch(zc, sigma))
    g = _realify(g, z)
    return g.item() if np.ndim(g) == 0 else g


def stieltjes_deriv(z, sigma=1.0):
    """``g'(z) = g / (2 sigma^2 g - z)``."""
    zc = _off_support(z, sigma)
    g = 2.0 / (zc + _sqrt_branch(zc, sigma))
    d = _realify(g / (2 * sigma**2 * g - zc), z)
    return d.item() if np.ndim(d) == 0 else d


def semicircle_density(x, sigma=1.0):
    _check_sigma(sigma)
    x = np.asarray(x, float)
    out = np.sqrt(np.clip(4 * sigma**2 - x * x, 0, None)) / (2 * np.pi * sigma**2)
    return out.item() if out.ndim == 0 else out


def semicircle_cdf(x, sigma=1.0):
    _check_sigma(sigma)
    t = np.clip(np.asarray(x, float) / (2 * sigma), -1, 1)
    out = 0.5 + (t * np.sqrt(1 - t * t) + np.arcsin(t)) / np.pi
    return out.item() if out.ndim == 0 else out


def semicircle_integral(f, sigma=1.0, n=400):
    """``int f dmu_sc`` by Gauss-Chebyshev (second kind) quadrature."""
    k = np.arange(1, n + 1)
    t = np.cos(k * np.pi / (n + 1))
    w = np.pi / (n + 1) * np.sin(k * np.pi / (n + 1)) ** 2
    return float(np.sum(w * f(2 * sigma * t)) * 2 / np.pi)


def rho(theta, sigma=1.0):
    """Outlier location ``theta + sigma^2 / theta``."""
    theta = np.asarray(theta, float)
    if np.any(theta == 0):
        raise ValueError("theta must be nonzero")
    out = theta + sigma**2 / theta
    return out.item() if out.ndim == 0 else out


def c_theta(theta, sigma=1.0):
    """Fluctuation scale ``theta^2 / (theta^2 - sigma^2)``; requires |theta| > sigma."""
    theta = np.asarray(theta, float)
    if np.any(np.abs(theta) <= sigma):
        raise ValueError("|theta| <= sigma: no outlier regime")
    out = theta**2 / (theta**2 - sigma**2)
    return out.item() if out.ndim == 0 else out
