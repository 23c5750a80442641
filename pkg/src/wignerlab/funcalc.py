"""Functional calculus through almost-analytic extensions, plus numerical
checks of the cumulant expansion, resolvent identities and block perturbation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numpy.polynomial import Polynomial
from scipy import linalg

from . import spectral as sp
from .ensemble import EntryLaw
from .rng import as_generator


class FuncCalcError(ValueError):
    pass


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormReport:
    n: int
    c_n: float  # max_{k<=n} sup |f^(k)|
    sobolev: float  # max_{k<=n} int |f^(k)|
    sobolev_plus: float  # max_{k<=n} int (1 + |x|) |f^(k)|


class TestFunction:
    """A real function with derivative evaluators ``f^(0..n_max)``.

    ``support`` is ``(-L, L)`` for compactly supported functions or None for
    functions on the whole line (norms are then integrated over ``tail``).
    """

    __test__ = False  # not a pytest class

    def __init__(self, derivs: Callable, n_max: int, support=None, name="f", tail=12.0, smoothness=None):
        self._derivs = derivs
        self.n_max = int(n_max)
        self.support = None if support is None else (float(support[0]), float(support[1]))
        self.name = name
        self.tail = tail
        # number of continuous derivatives on the whole line
        self.smoothness = self.n_max if smoothness is None else smoothness

    def __call__(self, x):
        return self.deriv(x, 0)

    def deriv(self, x, n):
        if not 0 <= n <= self.n_max:
            raise FuncCalcError(f"derivative order {n} outside 0..{self.n_max}")
        x = np.asarray(x, float)
        out = np.asarray(self._derivs(x, n), float)
        if self.support is not None:
            out = np.where((x > self.support[0]) & (x < self.support[1]), out, 0.0)
        return out

    @property
    def interval(self):
        return self.support if self.support is not None else (-self.tail, self.tail)

    @classmethod
    def poly_bump(cls, L=3.0, power=6, prefactor=(1.0,), name=None):
        """``P(x) (1 - (x/L)^2)^power`` on ``(-L, L)``, zero outside.

        A polynomial inside its support, so every derivative is exact; it is
        ``C^(power-1)`` on the line.
        """
        base = Polynomial([1.0, 0.0, -1.0 / L**2]) ** power * Polynomial(prefactor)
        polys = [base]
        n_max = base.degree() + 1
        for _ in range(n_max):
            polys.append(polys[-1].deriv())

        def derivs(x, n):
            return polys[n](x)

        return cls(derivs, n_max, (-L, L), name or f"bump{power}", smoothness=power - 1)

    @classmethod
    def gaussian(cls, scale=1.0, n_max=10):
        """``exp(-x^2 / (2 s^2))`` on the whole line; derivatives via Hermite polynomials."""
        he = np.polynomial.hermite_e

        def derivs(x, n):
            t = x / scale
            c = np.zeros(n + 1)
            c[n] = 1.0
            return (-1) ** n * he.hermeval(t, c) * np.exp(-t * t / 2) / scale**n

        return cls(derivs, n_max, None, "gauss")

    def norms(self, n, panels=400, order=8) -> NormReport:
        """Norm report by composite Gauss-Legendre quadrature over the support."""
        if n > self.n_max:
            raise FuncCalcError(f"order {n} exceeds n_max {self.n_max}")
        a, b = self.interval
        t, w = np.polynomial.legendre.leggauss(order)
        edges = np.linspace(a, b, panels + 1)
        mid = (edges[:-1] + edges[1:]) / 2
        half = (edges[1] - edges[0]) / 2
        x = (mid[:, None] + half * t[None, :]).ravel()
        wx = np.tile(w * half, panels)
        fine = np.linspace(a, b, 20001)
        cn = sob = plus = 0.0
        for k in range(n + 1):
            vals = np.abs(self.deriv(x, k))
            cn = max(cn, float(np.max(np.abs(self.deriv(fine, k)))), float(vals.max()))
            sob = max(sob, float(np.sum(wx * vals)))
            plus = max(plus, float(np.sum(wx * (1 + np.abs(x)) * vals)))
        return NormReport(n, cn, sob, plus)

    def check_derivatives(self, n=None, points=100, rng=None, h=None):
        """Max relative error of ``f^(k+1)`` against a central difference of ``f^(k)``.

        Probes are drawn inside the support (away from its ends); the error is
        measured relative to ``sup |f^(k+1)|``.
        """
        n = self.n_max - 1 if n is None else n
        rng = as_generator(0 if rng is None else rng)
        a, b = self.interval
        pad = 0.05 * (b - a)
        x = rng.uniform(a + pad, b - pad, points)
        worst = 0.0
        for k in range(n):
            hk = h or 1e-4 * (b - a)
            # fourth-order central stencil
            fd = (
                -self.deriv(x + 2 * hk, k) + 8 * self.deriv(x + hk, k) - 8 * self.deriv(x - hk, k) + self.deriv(x - 2 * hk, k)
            ) / (12 * hk)
            exact = self.deriv(x, k + 1)
            scale = max(float(np.max(np.abs(self.deriv(np.linspace(a, b, 2001), k + 1)))), 1e-300)
            worst = max(worst, float(np.max(np.abs(fd - exact))) / scale)
        return worst


# ---------------------------------------------------------------------------
# cut-off functions in the imaginary direction
# ---------------------------------------------------------------------------


def _flat(t, power):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-1.0 / t[pos] ** power)
    return out


def _flat_d(t, power):
    t = np.asarray(t, float)
    out = np.zeros_like(t)
    pos = t > 0
    tp = t[pos]
    out[pos] = power * np.exp(-1.0 / tp**power) / tp ** (power + 1)
    return out


@dataclass(frozen=True)
class Bump:
    """``sigma(y) = psi(2 - 2|y|)`` with ``psi(t) = e(t) / (e(t) + e(1 - t))``.

    ``e(t) = exp(-1/t^p)`` for ``t > 0`` and 0 otherwise, so sigma is C-infinity,
    equal to 1 on ``|y| <= 1/2`` and 0 on ``|y| >= 1``. ``p = 1`` is the
    classical mollifier transition; ``p = 2`` is flatter at both ends.
    """

    power: int = 1

    def __call__(self, y):
        t = 2 - 2 * np.abs(np.asarray(y, float))
        a, b = _flat(t, self.power), _flat(1 - t, self.power)
        return a / (a + b)

    def deriv(self, y):
        y = np.asarray(y, float)
        t = 2 - 2 * np.abs(y)
        a, b = _flat(t, self.power), _flat(1 - t, self.power)
        da, db = _flat_d(t, self.power), _flat_d(1 - t, self.power)
        dpsi = (da * b + a * db) / (a + b) ** 2
        return dpsi * (-2 * np.sign(y))


BUMPS = {"exp1": Bump(1), "exp2": Bump(2)}


@dataclass(frozen=True)
class HSQuadrature:
    """Grid for the almost-analytic integral over ``y > 0``.

    ``x`` runs over the support of f with ``nx`` midpoints. On ``(0, 1/2]``
    (where the cut-off is 1) the y nodes are midpoints in ``t`` with
    ``y = t^2 / 2``, which clusters them at the real axis; on ``[1/2, 1]``
    a plain midpoint rule with ``ny_outer`` nodes is used.
    """

    l: int = 4
    bump: Bump = field(default_factory=Bump)
    nx: int = 300
    ny_inner: int = 20
    ny_outer: int = 20
    max_points: int = 2_000_000

    def refined(self, factor=2):
        return HSQuadrature(self.l, self.bump, self.nx * factor, self.ny_inner * factor, self.ny_outer * factor, self.max_points)

    def y_nodes(self):
        t = (np.arange(self.ny_inner) + 0.5) / self.ny_inner
        y_in, w_in = 0.5 * t * t, t / self.ny_inner
        h = 0.5 / self.ny_outer
        y_out = 0.5 + h * (np.arange(self.ny_outer) + 0.5)
        return np.concatenate([y_in, y_out]), np.concatenate([w_in, np.full(self.ny_outer, h)])

    def x_nodes(self, a, b):
        h = (b - a) / self.nx
        return a + h * (np.arange(self.nx) + 0.5), h


def dbar_extension(f: TestFunction, x, y, l, bump: Bump):
    """``d f~ / d z-bar`` at ``x + i y`` for the order-l extension."""
    if l + 1 > f.n_max:
        raise FuncCalcError(f"need f^({l + 1}); evaluator stops at {f.n_max}")
    x, y = np.broadcast_arrays(np.asarray(x, float), np.asarray(y, float))
    iy = 1j * y
    taylor = np.zeros(x.shape, complex)
    for n in range(l + 1):
        taylor += f.deriv(x, n) * iy**n / math.factorial(n)
    return 0.5 * taylor * 1j * bump.deriv(y) + 0.5 * f.deriv(x, l + 1) * iy**l * bump(y) / math.factorial(l)


def dbar_bound_constant(f: TestFunction, quad: HSQuadrature, nx=200):
    """Smallest C with ``|dbar f~| <= C max_{1<=j<=l+1} |f^(j)(x)| |y|^l`` on the grid.

    Points where every derivative vanishes are skipped.
    """
    a, b = f.interval
    x, _ = quad.x_nodes(a, b) if nx is None else (np.linspace(a, b, nx), None)
    y, _ = quad.y_nodes()
    X, Y = np.meshgrid(x, y, indexing="ij")
    d = np.abs(dbar_extension(f, X, Y, quad.l, quad.bump))
    m = np.max([np.abs(f.deriv(X, j)) for j in range(1, quad.l + 2)], axis=0)
    ok = m > 1e-300
    return float(np.max(d[ok] / (m[ok] * Y[ok] ** quad.l)))


def _check_support(X, f: TestFunction):
    if f.support is None:
        return
    a, b = f.support
    n = X.shape[0]
    if sp.count_eigenvalues_above(X, b) != 0 or sp.count_eigenvalues_above(X, a) != n:
        raise FuncCalcError(f"support ({a}, {b}) of {f.name} does not cover the spectrum")


def hs_apply(X, f: TestFunction, quad: HSQuadrature | None = None):
    """``f(X)`` from ``-(1/pi) int dbar f~(z) (z - X)^-1 dx dy``.

    Only ``y > 0`` is integrated: the lower half-plane contributes the
    adjoint, so ``f(X) = -(1/pi) (I + I*)``. ``X`` is first reduced to
    tridiagonal form by a unitary similarity and every resolvent is a
    banded solve; no eigendecomposition is used.
    """
    quad = quad or HSQuadrature()
    X = sp._check_matrix(X)
    n = X.shape[0]
    _check_support(X, f)
    a, b = f.interval
    if f.support is None:
        lo, hi = -f.tail, f.tail
        if sp.count_eigenvalues_above(X, hi) or sp.count_eigenvalues_above(X, lo) != n:
            raise FuncCalcError("spectrum extends past the integration range")
    xs, hx = quad.x_nodes(a, b)
    ys, wy = quad.y_nodes()
    if len(xs) * len(ys) > quad.max_points:
        raise FuncCalcError(f"quadrature budget exceeded: {len(xs) * len(ys)} > {quad.max_points} points")
    T, Q = linalg.hessenberg(X, calc_q=True)
    d = np.real(np.diag(T)) if np.iscomplexobj(T) else np.diag(T)
    e = np.diag(T, -1)
    eye = np.eye(n, dtype=complex)
    acc = np.zeros((n, n), complex)
    for y, w in zip(ys, wy):
        c = dbar_extension(f, xs, y, quad.l, quad.bump) * (w * hx)
        keep = np.abs(c) > 0
        for x, ci in zip(xs[keep], c[keep]):
            ab = np.zeros((3, n), complex)
            ab[0, 1:] = -np.conj(e)  # superdiagonal of z - T
            ab[1] = (x + 1j * y) - d
            ab[2, :-1] = -e
            acc += ci * linalg.solve_banded((1, 1), ab, eye, check_finite=False)
    I = Q @ acc @ Q.conj().T
    out = -(I + I.conj().T) / math.pi
    return out.real if np.isrealobj(X) else out


def hs_error(X, f: TestFunction, quad: HSQuadrature | None = None):
    """Relative Frobenius distance between ``hs_apply`` and the eigendecomposition route."""
    ref = sp.spectral_apply(X, f)
    return float(np.linalg.norm(hs_apply(X, f, quad) - ref) / np.linalg.norm(ref))


# ---------------------------------------------------------------------------
# cumulant expansion
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecouplingCheck:
    lhs: float
    rhs: float
    epsilon: float
    bound: float


def _decoupling_constant(p):
    return (1 + (3 + 2 * p) ** (p + 2)) / math.factorial(p + 1)


def check_decoupling(law: EntryLaw, phi, p: int) -> DecouplingCheck:
    """``E xi phi(xi)`` against ``sum_{a<=p} kappa_(a+1)/a! E phi^(a)(xi)``.

    ``phi`` is a numpy Polynomial (or coefficient list). The remainder bound
    is ``C_p sup|phi^(p+1)| E|xi|^(p+2)`` with the sup over the support of
    the law; it is infinite for an unbounded law unless ``phi^(p+1)`` is
    constant.
    """
    phi = phi if isinstance(phi, Polynomial) else Polynomial(phi)
    if law.complex_mode:
        raise FuncCalcError("decoupling check is for real laws")
    abs_m = law.base_abs_moment(p + 2)
    if not math.isfinite(abs_m):
        raise FuncCalcError(f"law {law.kind} lacks a finite moment of order {p + 2}")
    kappa = law.base_cumulants(p + 1)
    lhs = law.expect(lambda t: t * phi(t))
    rhs = 0.0
    d = phi
    for a in range(p + 1):
        rhs += kappa[a] / math.factorial(a) * law.expect(d)
        d = d.deriv()
    top = d  # phi^(p+1)
    atoms = law._atoms()
    if top.degree() == 0 or np.allclose(top.coef, 0):
        sup = float(abs(top.coef[0]))
    elif atoms is not None:
        sup = float(np.max(np.abs(top(atoms[0]))))
    elif law.kind == "uniform":
        a_ = law.params[0]
        grid = np.linspace(-a_, a_, 2001)
        sup = float(np.max(np.abs(top(grid))))
    else:
        sup = math.inf
    bound = _decoupling_constant(p) * sup * abs_m
    return DecouplingCheck(float(lhs), float(rhs), float(lhs - rhs), bound)


# ---------------------------------------------------------------------------
# resolvent identities
# ---------------------------------------------------------------------------


def _resolvent(X, z):
    X = np.asarray(X)
    n = X.shape[0]
    A = z * np.eye(n) - X
    try:
        return np.linalg.solve(A, np.eye(n, dtype=A.dtype))
    except np.linalg.LinAlgError as exc:
        raise FuncCalcError(f"singular solve at z={z}") from exc


def check_resolvent_identity(X1, X2, z):
    """``max |R2 - R1 + R1 (X1 - X2) R2|`` (zero in exact arithmetic)."""
    X1, X2 = np.asarray(X1), np.asarray(X2)
    for X in (X1, X2):
        if np.isreal(z) and not sp.spectral_gap_ok(X, float(np.real(z)), sp.default_tol(X)):
            raise FuncCalcError(f"z={z} lies on the spectrum")
    R1, R2 = _resolvent(X1, z), _resolvent(X2, z)
    dev = R2 - R1 + R1 @ (X1 - X2) @ R2
    return float(np.max(np.abs(dev)))


@dataclass(frozen=True)
class DerivativeCheck:
    symmetric: float  # real symmetric direction E_pq + E_qp
    imaginary: float  # Hermitian direction i (E_pq - E_qp); nan for p == q
    step: float


def check_resolvent_derivatives(X, z, p, q, h=None) -> DerivativeCheck:
    """Max deviation of the entrywise resolvent derivatives from central differences.

    Real direction (``X_pq = X_qp`` moved together): ``R_kp R_ql + R_kq R_pl``,
    or ``R_kp R_pl`` when ``p == q``. Hermitian imaginary direction: ``i
    (R_kp R_ql - R_kq R_pl)``.
    """
    X = np.asarray(X, dtype=complex if np.iscomplexobj(X) else float)
    n = X.shape[0]
    h = 1e-5 * (1 + float(np.linalg.norm(X, 2))) if h is None else h
    R = _resolvent(X, z)
    gap = min(abs(z - w) for w in np.linalg.eigvalsh(X)) if np.isreal(z) else abs(np.imag(z))
    if h >= 0.1 * gap:
        raise FuncCalcError(f"step {h:.3g} underflows the distance {gap:.3g} to the spectrum")
    E = np.zeros((n, n))
    E[p, q] = 1.0
    E[q, p] = 1.0
    fd = (_resolvent(X + h * E, z) - _resolvent(X - h * E, z)) / (2 * h)
    if p == q:
        formula = np.outer(R[:, p], R[p, :])
    else:
        formula = np.outer(R[:, p], R[q, :]) + np.outer(R[:, q], R[p, :])
    sym = float(np.max(np.abs(fd - formula)))
    imag = math.nan
    if p != q:
        F = np.zeros((n, n), complex)
        F[p, q] = 1j
        F[q, p] = -1j
        Xc = X.astype(complex)
        fd_i = (_resolvent(Xc + h * F, z) - _resolvent(Xc - h * F, z)) / (2 * h)
        formula_i = 1j * (np.outer(R[:, p], R[q, :]) - np.outer(R[:, q], R[p, :]))
        imag = float(np.max(np.abs(fd_i - formula_i)))
    return DerivativeCheck(sym, imag, h)


def resolvent_entry_bound_ok(X, z):
    """All ``|R_ij(z)| <= 1 / |Im z|``."""
    R = _resolvent(X, z)
    return bool(np.max(np.abs(R)) <= 1.0 / abs(np.imag(z)) * (1 + 1e-12))


# ---------------------------------------------------------------------------
# block perturbation
# ---------------------------------------------------------------------------


def two_by_two_shift(eps):
    """Lower eigenvalue of ``[[0, eps], [eps, 1]]``: ``(1 - sqrt(1 + 4 eps^2)) / 2``."""
    return (1 - math.sqrt(1 + 4 * eps * eps)) / 2


@dataclass(frozen=True)
class BlockCheck:
    max_shift: float
    epsilon: float
    constant: float  # calibrated max shift / eps^2
    bound_constant: float  # (n1 + n2) / gap, a sufficient constant

    @property
    def bound(self):
        return self.bound_constant * self.epsilon**2


def check_block_perturbation(block_sizes, gap, epsilon, rng=None, n_draws=1000) -> BlockCheck:
    """Eigenvalue shift of a two-block diagonal matrix under an off-diagonal coupling.

    The first block has spectrum in ``[-1/2, 0]``, the second in
    ``[gap, gap + 1/2]``; the coupling has spectral norm ``epsilon``. The
    shift of the lowest ``n1`` eigenvalues is compared with ``epsilon^2``.
    """
    n1, n2 = block_sizes
    if gap <= 0:
        raise FuncCalcError("gap must be positive")
    if epsilon < 0:
        raise FuncCalcError("epsilon must be non-negative")
    rng = as_generator(rng)
    worst = 0.0
    for _ in range(n_draws):
        a = -0.5 * rng.random(n1)
        b = gap + 0.5 * rng.random(n2)
        Q1 = np.linalg.qr(rng.standard_normal((n1, n1)))[0]
        Q2 = np.linalg.qr(rng.standard_normal((n2, n2)))[0]
        A = (Q1 * a) @ Q1.T
        B = (Q2 * b) @ Q2.T
        C = rng.standard_normal((n1, n2))
        nc = np.linalg.norm(C, 2)
        C = C * (epsilon / nc) if nc > 0 else C
        M = np.block([[A, C], [C.T, B]])
        if np.min(b) - np.max(a) < gap:
            raise FuncCalcError("gap violated")
        w = np.linalg.eigvalsh(M)[:n1]
        worst = max(worst, float(np.max(np.abs(w - np.sort(a)))))
    # eps^2 can underflow for subnormal eps
    const = worst / epsilon**2 if epsilon**2 > 0 else 0.0
    return BlockCheck(worst, float(epsilon), const, 1.0 / gap)
