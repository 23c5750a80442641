"""Wigner ensembles, entry laws and finite-rank deformations.

``X = W / sqrt(N)`` with independent entries on and above the diagonal, and
``M = X + U diag(theta) U*`` for a column-orthonormal ``U``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import special

from .rng import as_generator

MAX_N = 4096
_ORTHO_TOL = 1e-12


class EnsembleError(ValueError):
    """Invalid ensemble, law or deformation specification."""


# ---------------------------------------------------------------------------
# entry laws
# ---------------------------------------------------------------------------

KINDS = ("gaussian", "rademacher", "uniform", "two_point", "table", "student_t")


def _double_factorial(n):
    return math.prod(range(n, 0, -2)) if n > 0 else 1


@dataclass(frozen=True)
class EntryLaw:
    """Centered scalar law with its moment bookkeeping.

    ``variance`` is E|x|^2 (the off-diagonal sigma^2 when used for W_ij).
    ``fourth_cumulant`` follows the convention
    ``E|x|^4 - (4 - beta) (E|x|^2)^2`` with beta = 2 in complex mode, so a
    complex Gaussian has zero fourth cumulant. In complex mode the real and
    imaginary parts are i.i.d. copies of the base law scaled by 1/sqrt(2).
    """

    kind: str
    params: tuple
    variance: float
    third_cumulant: float
    fourth_cumulant: float
    fifth_abs_moment: float
    third_abs_moment: float
    complex_mode: bool = False

    # -- analytic moments of the real base law ------------------------------
    def _atoms(self):
        if self.kind in ("rademacher", "two_point", "table"):
            values, probs = self.params
            return np.asarray(values, float), np.asarray(probs, float)
        return None

    def base_moment(self, k):
        """E xi^k for one real draw of the base law."""
        atoms = self._atoms()
        if atoms is not None:
            v, p = atoms
            return float(np.sum(p * v**k))
        if k % 2:
            return 0.0
        if self.kind == "gaussian":
            (s,) = self.params
            return float(_double_factorial(k - 1) * s ** (k // 2))
        if self.kind == "uniform":
            (a,) = self.params
            return float(a**k / (k + 1))
        if self.kind == "student_t":
            df, scale = self.params
            if k >= df:
                return math.inf
            m = df ** (k / 2) * math.prod((2 * i - 1) / (df - 2 * i) for i in range(1, k // 2 + 1))
            return float(m * scale**k)
        raise EnsembleError(f"unsupported kind {self.kind!r}")

    def base_abs_moment(self, k):
        """E |xi|^k for the real base law (k may be odd)."""
        atoms = self._atoms()
        if atoms is not None:
            v, p = atoms
            return float(np.sum(p * np.abs(v) ** k))
        if self.kind == "gaussian":
            (s,) = self.params
            return float(s ** (k / 2) * 2 ** (k / 2) * special.gamma((k + 1) / 2) / math.sqrt(math.pi))
        if self.kind == "uniform":
            (a,) = self.params
            return float(a**k / (k + 1))
        if self.kind == "student_t":
            df, scale = self.params
            if k >= df:
                return math.inf
            m = (
                df ** (k / 2)
                * special.gamma((k + 1) / 2)
                * special.gamma((df - k) / 2)
                / (math.sqrt(math.pi) * special.gamma(df / 2))
            )
            return float(m * scale**k)
        raise EnsembleError(f"unsupported kind {self.kind!r}")

    def expect(self, fn):
        """E fn(xi) over the real base law.

        Exact finite sums for discrete laws, 80-point Gauss-Hermite for the
        Gaussian, Gauss-Legendre for the uniform law, adaptive quadrature
        for Student t.
        """
        atoms = self._atoms()
        if atoms is not None:
            v, p = atoms
            return float(np.sum(p * np.asarray(fn(v), float)))
        if self.kind == "gaussian":
            (s,) = self.params
            x, w = np.polynomial.hermite_e.hermegauss(80)
            return float(np.sum(w * fn(math.sqrt(s) * x)) / math.sqrt(2 * math.pi))
        if self.kind == "uniform":
            (a,) = self.params
            x, w = np.polynomial.legendre.leggauss(80)
            return float(np.sum(w * fn(a * x)) / 2)
        if self.kind == "student_t":
            from scipy import integrate, stats

            df, scale = self.params
            dist = stats.t(df, scale=scale)
            val, _ = integrate.quad(lambda t: fn(t) * dist.pdf(t), -np.inf, np.inf, limit=200)
            return float(val)
        raise EnsembleError(f"unsupported kind {self.kind!r}")

    def base_cumulants(self, order):
        """Cumulants kappa_1..kappa_order of the real base law."""
        m = [1.0] + [self.base_moment(k) for k in range(1, order + 1)]
        return cumulants_from_moments(m)[1:]

    # -- sampling -----------------------------------------------------------
    def _sample_base(self, rng, size):
        if self.kind == "gaussian":
            (s,) = self.params
            return rng.standard_normal(size) * math.sqrt(s)
        if self.kind == "uniform":
            (a,) = self.params
            return rng.uniform(-a, a, size)
        if self.kind == "student_t":
            df, scale = self.params
            return rng.standard_t(df, size) * scale
        v, p = self._atoms()
        if len(v) == 2:
            return np.where(rng.random(size) < p[0], v[0], v[1])
        return v[np.searchsorted(np.cumsum(p), rng.random(size) * p.sum(), side="right").clip(0, len(v) - 1)]

    def sample(self, rng, size=None):
        rng = as_generator(rng)
        if not self.complex_mode:
            return self._sample_base(rng, size)
        re = self._sample_base(rng, size)
        im = self._sample_base(rng, size)
        return (re + 1j * im) / math.sqrt(2.0)

    @property
    def sigma(self):
        return math.sqrt(self.variance)

    @property
    def fourth_abs_moment(self):
        return self.fourth_cumulant + (4 - (2 if self.complex_mode else 1)) * self.variance**2


def cumulants_from_moments(m):
    """Cumulants from raw moments ``m[0..n]`` (m[0] = 1) by the standard recursion."""
    n = len(m) - 1
    k = [0.0] * (n + 1)
    for j in range(1, n + 1):
        k[j] = m[j] - sum(math.comb(j - 1, i - 1) * k[i] * m[j - i] for i in range(1, j))
    return k


def _complex_abs_moment(law, k):
    """E|(xi1 + i xi2)/sqrt 2|^k for i.i.d. base draws."""
    atoms = law._atoms()
    if atoms is not None:
        v, p = atoms
        r2 = (v[:, None] ** 2 + v[None, :] ** 2) / 2
        return float(np.sum(p[:, None] * p[None, :] * r2 ** (k / 2)))
    if law.kind == "gaussian":
        (s,) = law.params
        return float(s ** (k / 2) * special.gamma(1 + k / 2))
    if law.kind == "student_t" and k >= law.params[0]:
        return math.inf
    from scipy import integrate

    val, _ = integrate.dblquad(
        lambda a, b: law_pdf(law, a) * law_pdf(law, b) * ((a * a + b * b) / 2) ** (k / 2),
        -np.inf if law.kind == "student_t" else -law.params[0],
        np.inf if law.kind == "student_t" else law.params[0],
        -np.inf if law.kind == "student_t" else -law.params[0],
        np.inf if law.kind == "student_t" else law.params[0],
    )
    return float(val)


def law_pdf(law, x):
    if law.kind == "uniform":
        (a,) = law.params
        return 1.0 / (2 * a)
    if law.kind == "student_t":
        from scipy import stats

        df, scale = law.params
        return stats.t.pdf(x, df, scale=scale)
    raise EnsembleError(f"no density for kind {law.kind!r}")


def resolve_entry_law(desc) -> EntryLaw:
    """Build an :class:`EntryLaw` from a descriptor.

    ``desc`` is a kind name or a mapping such as ``{"kind": "gaussian",
    "variance": 2}``, ``{"kind": "two_point", "a": 2, "p": 0.2}``,
    ``{"kind": "table", "values": [...], "probs": [...]}``; add
    ``"complex": true`` for Hermitian off-diagonal laws.

    Examples
    --------
    >>> resolve_entry_law("rademacher").fourth_cumulant
    -2.0
    """
    if isinstance(desc, EntryLaw):
        return desc
    if isinstance(desc, str):
        desc = {"kind": desc}
    desc = dict(desc)
    kind = str(desc.pop("kind", "")).lower()
    complex_mode = bool(desc.pop("complex", False))
    if kind not in KINDS:
        raise EnsembleError(f"unsupported entry law kind {kind!r}")

    if kind == "gaussian":
        params = (float(desc.get("variance", 1.0)),)
        if params[0] < 0:
            raise EnsembleError("variance must be >= 0")
    elif kind == "uniform":
        var = float(desc.get("variance", 1.0))
        if var < 0:
            raise EnsembleError("variance must be >= 0")
        params = (math.sqrt(3 * var),)
    elif kind == "rademacher":
        c = float(desc["scale"]) if "scale" in desc else math.sqrt(float(desc.get("variance", 1.0)))
        params = ((c, -c), (0.5, 0.5))
    elif kind == "two_point":
        a, p = float(desc["a"]), float(desc["p"])
        if not 0 < p < 1 or a == 0:
            raise EnsembleError("two_point needs a != 0 and 0 < p < 1")
        params = ((a, -p * a / (1 - p)), (p, 1 - p))
    elif kind == "table":
        values = tuple(float(v) for v in desc["values"])
        probs = np.asarray(desc["probs"], float)
        if len(values) != len(probs) or np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-12):
            raise EnsembleError("table needs matching values/probs summing to 1")
        if abs(float(np.dot(values, probs))) > 1e-12:
            raise EnsembleError("table law is not centered")
        params = (values, tuple(probs.tolist()))
    else:  # student_t
        df = float(desc["df"])
        if df <= 5:
            raise EnsembleError(f"student_t with df={df} has infinite fifth moment")
        scale = math.sqrt(float(desc.get("variance", 1.0)) * (df - 2) / df)
        params = (df, scale)

    proto = EntryLaw(kind, params, 0.0, 0.0, 0.0, 0.0, 0.0, complex_mode)
    m = [1.0] + [proto.base_moment(k) for k in range(1, 5)]
    if abs(m[1]) > 1e-12:
        raise EnsembleError("entry law is not centered")
    kap = cumulants_from_moments(m)
    var = m[2]
    if complex_mode:
        variance = var
        k4 = (m[4] - 3 * var**2) / 2
        k3 = kap[3] / 2**1.5
        m5 = _complex_abs_moment(proto, 5)
        m3 = _complex_abs_moment(proto, 3)
    else:
        variance, k3, k4 = var, kap[3], kap[4]
        m5 = proto.base_abs_moment(5)
        m3 = proto.base_abs_moment(3)
    if not math.isfinite(m5):
        raise EnsembleError("entry law has infinite fifth absolute moment")
    return EntryLaw(kind, params, float(variance), float(k3), float(k4), float(m5), float(m3), complex_mode)


def describe_law(law: EntryLaw) -> dict:
    """JSON-friendly summary of a law (inverse of the descriptor, plus moments)."""
    return {
        "kind": law.kind,
        "params": law.params,
        "complex": law.complex_mode,
        "variance": law.variance,
        "kappa3": law.third_cumulant,
        "kappa4": law.fourth_cumulant,
        "m3_abs": law.third_abs_moment,
        "m5_abs": law.fifth_abs_moment,
    }


# ---------------------------------------------------------------------------
# Wigner matrices
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WindowOverride:
    """Non-i.i.d. entries on the first ``K`` rows.

    ``corner`` maps 0-based pairs ``(i, l)`` with ``i <= l < K`` to laws.
    ``rows`` maps a row ``i < K`` to a list of ``(fraction, law)`` pieces
    that tile the columns ``K..N-1`` of that row in order.
    """

    K: int
    corner: Mapping[tuple, EntryLaw] = field(default_factory=dict)
    rows: Mapping[int, Sequence[tuple]] = field(default_factory=dict)


@dataclass(frozen=True)
class WignerSpec:
    N: int
    beta: int = 1
    offdiag_law: EntryLaw = None
    diag_law: EntryLaw = None
    window: WindowOverride | None = None

    def __post_init__(self):
        if self.offdiag_law is None:
            object.__setattr__(self, "offdiag_law", resolve_entry_law({"kind": "gaussian", "complex": self.beta == 2}))
        if self.diag_law is None:
            object.__setattr__(self, "diag_law", default_diag_law(self.offdiag_law.variance, self.beta))
        validate_wigner_spec(self)

    @property
    def sigma(self):
        return self.offdiag_law.sigma


def default_diag_law(variance, beta=1):
    """Gaussian, variance 2 sigma^2 for beta=1 and sigma^2 for beta=2."""
    return resolve_entry_law({"kind": "gaussian", "variance": (2.0 if beta == 1 else 1.0) * variance})


def validate_wigner_spec(spec: WignerSpec):
    if int(spec.N) < 1:
        raise EnsembleError("N must be a positive integer")
    if spec.N > MAX_N:
        raise EnsembleError(f"N={spec.N} exceeds the configured cap {MAX_N}")
    if spec.beta not in (1, 2):
        raise EnsembleError("beta must be 1 or 2")
    off = spec.offdiag_law
    if off.variance <= 0:
        raise EnsembleError("off-diagonal variance must be positive")
    if off.complex_mode != (spec.beta == 2):
        raise EnsembleError("off-diagonal law complex flag must match beta")
    if spec.diag_law.complex_mode:
        raise EnsembleError("diagonal law must be real")
    w = spec.window
    if w is None:
        return
    if not 0 < w.K <= spec.N:
        raise EnsembleError("window K out of range")
    for (i, l), law in w.corner.items():
        if not 0 <= i <= l < w.K:
            raise EnsembleError(f"window position {(i, l)} outside the K x K corner")
        if i != l and not math.isclose(law.variance, off.variance, rel_tol=1e-12):
            raise EnsembleError(f"window law at {(i, l)} has variance {law.variance}, expected {off.variance}")
        if i != l and law.complex_mode != off.complex_mode:
            raise EnsembleError("window law complex flag mismatch")
    for i, pieces in w.rows.items():
        if not 0 <= i < w.K:
            raise EnsembleError(f"row override {i} outside the window")
        if not math.isclose(sum(fr for fr, _ in pieces), 1.0, abs_tol=1e-9):
            raise EnsembleError(f"row {i} fractions must sum to 1")
        for _, law in pieces:
            if not math.isclose(law.variance, off.variance, rel_tol=1e-12):
                raise EnsembleError(f"row {i} law variance differs from sigma^2")


def row_column_split(N, K, pieces):
    """Column index ranges in ``K..N-1`` assigned to each row piece."""
    n = N - K
    bounds = np.rint(np.cumsum([0.0] + [fr for fr, _ in pieces]) * n).astype(int)
    return [(K + bounds[i], K + bounds[i + 1]) for i in range(len(pieces))]


def sample_wigner(spec: WignerSpec, rng) -> np.ndarray:
    """Draw ``X = W / sqrt(N)`` as a dense self-adjoint array.

    Draw order (fixed, hence reproducible): full off-diagonal block, diagonal,
    then window corner entries in sorted order, then row pieces.
    """
    rng = as_generator(rng)
    N = spec.N
    W = np.asarray(spec.offdiag_law.sample(rng, (N, N)))
    d = np.asarray(spec.diag_law.sample(rng, N), float)
    w = spec.window
    if w is not None:
        for (i, l) in sorted(w.corner):
            val = w.corner[(i, l)].sample(rng)
            if i == l:
                d[i] = float(np.real(val))
            else:
                W[i, l] = val
        for i in sorted(w.rows):
            for (a, b), (_, law) in zip(row_column_split(N, w.K, w.rows[i]), w.rows[i]):
                if b > a:
                    W[i, a:b] = law.sample(rng, b - a)
    upper = np.triu(W, 1)
    X = upper + upper.conj().T
    X[np.diag_indices(N)] = d
    return X / math.sqrt(N)


# ---------------------------------------------------------------------------
# deformations
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Localized:
    """Eigenvectors on the first ``K`` canonical coordinates.

    ``block`` is a K x r matrix with orthonormal columns; None means the
    first r basis vectors.
    """

    block: np.ndarray | None = None


@dataclass(frozen=True)
class Delocalized:
    """``method='qr'``: Q factor of a Gaussian block; ``'fourier'``: DCT rows.

    The vectors live on the first ``ceil(N**support_exponent)`` coordinates.
    """

    method: str = "qr"
    support_exponent: float = 1.0


@dataclass(frozen=True)
class L2Tail:
    """Closed-form l^2 vectors built from geometric sequences ``q**k``.

    One ratio per column; the raw sequences are orthonormalised in l^2
    exactly through their Gram matrix, then truncated to ``truncation``
    coordinates (chosen automatically when None).
    """

    ratios: tuple = (0.5,)
    truncation: int | None = None


@dataclass(frozen=True)
class Deformation:
    """``A = U diag(thetas) U*`` with spikes listed by decreasing theta."""

    spikes: tuple
    U: np.ndarray
    mode: object
    span_count: int
    max_abs_entry: float
    tail_norms: tuple = ()

    @property
    def N(self):
        return self.U.shape[0]

    @property
    def r(self):
        return self.U.shape[1]

    @property
    def thetas(self):
        return np.repeat([t for t, _ in self.spikes], [k for _, k in self.spikes]).astype(float)

    @property
    def Theta(self):
        return np.diag(self.thetas)

    def columns(self, j):
        """Column slice of ``U`` belonging to spike ``j``."""
        start = sum(k for _, k in self.spikes[:j])
        return slice(start, start + self.spikes[j][1])

    def matrix(self):
        return (self.U * self.thetas) @ self.U.conj().T


def _normalize_spikes(spikes):
    out = []
    for item in spikes:
        theta, k = (item, 1) if np.isscalar(item) else item
        theta, k = float(theta), int(k)
        if theta == 0:
            raise EnsembleError("spike theta must be nonzero")
        if k < 1:
            raise EnsembleError("spike multiplicity must be >= 1")
        out.append((theta, k))
    if any(a[0] <= b[0] for a, b in zip(out, out[1:])):
        raise EnsembleError("spikes must be strictly decreasing in theta")
    return tuple(out)


def _geometric_family(ratios):
    """Coefficients C (p x p) with columns sum_a C[a, j] q_a^k orthonormal in l^2(k >= 1)."""
    q = np.asarray(ratios, float)
    if np.any(np.abs(q) >= 1) or np.any(q == 0):
        raise EnsembleError("L2Tail ratios must lie in (-1, 1) minus 0")
    G = np.outer(q, q) / (1 - np.outer(q, q))
    try:
        L = np.linalg.cholesky(G)
    except np.linalg.LinAlgError as exc:
        raise EnsembleError("L2Tail ratios are not linearly independent") from exc
    return np.linalg.inv(L).T, q


def l2tail_tail_norms(ratios, n):
    """Exact l^2 norms of the discarded coordinates k > n of each column."""
    C, q = _geometric_family(ratios)
    qq = np.outer(q, q)
    T = qq ** (n + 1) / (1 - qq)
    return np.sqrt(np.maximum(np.einsum("ap,ab,bp->p", C, T, C), 0.0))


def l2tail_vectors(ratios, n):
    C, q = _geometric_family(ratios)
    k = np.arange(1, n + 1)
    return (q[None, :] ** k[:, None]) @ C


def _count_nonzero_rows(U):
    return int(np.count_nonzero(np.any(U != 0, axis=1)))


def build_deformation(spikes, mode=None, N=None, rng=None, *, sigma=1.0) -> Deformation:
    """Construct the deformation ``A = U Theta U*`` on ``C^N`` (or ``R^N``).

    ``spikes`` is a list of ``(theta, multiplicity)`` pairs, strictly
    decreasing in theta. ``span_count`` counts the canonical coordinates
    needed to span the eigenvectors of spikes with theta > sigma.
    """
    spikes = _normalize_spikes(spikes)
    mode = Localized() if mode is None else mode
    N = int(N)
    r = sum(k for _, k in spikes)
    if r > N:
        raise EnsembleError(f"total multiplicity {r} exceeds N={N}")
    tails = ()

    if isinstance(mode, Localized):
        block = np.eye(r) if mode.block is None else np.asarray(mode.block)
        if block.ndim != 2 or block.shape[1] != r or block.shape[0] > N:
            raise EnsembleError(f"localized block must be K x {r} with K <= N")
        U = np.zeros((N, r), dtype=block.dtype)
        U[: block.shape[0]] = block
    elif isinstance(mode, Delocalized):
        m = min(N, max(r, math.ceil(N**mode.support_exponent - 1e-9)))
        if mode.method == "qr":
            G = as_generator(rng).standard_normal((m, r))
            Q, R = np.linalg.qr(G)
            Q = Q * np.sign(np.diag(R))
        elif mode.method == "fourier":
            i = np.arange(m)[:, None] + 0.5
            k = np.arange(1, r + 1)[None, :]
            Q = np.sqrt(2.0 / m) * np.cos(np.pi * i * k / m)
        else:
            raise EnsembleError(f"unknown delocalization method {mode.method!r}")
        U = np.zeros((N, r))
        U[:m] = Q
    elif isinstance(mode, L2Tail):
        if len(mode.ratios) != r:
            raise EnsembleError(f"L2Tail needs {r} ratios")
        n = mode.truncation
        if n is None:
            target = min(1 / (math.sqrt(N) * math.log(max(N, 3))), math.sqrt(_ORTHO_TOL) / 4)
            n = 1
            while n < N and np.max(l2tail_tail_norms(mode.ratios, n)) >= target:
                n += 1
        n = min(int(n), N)
        tails = tuple(float(t) for t in l2tail_tail_norms(mode.ratios, n))
        # the truncated family is orthonormal only up to O(tail)
        if max(tails) >= math.sqrt(_ORTHO_TOL) / 4:
            raise EnsembleError(f"L2Tail truncated at {n} coordinates is not orthonormal to {_ORTHO_TOL:g}; increase N or the truncation")
        if max(tails) >= 1 / (math.sqrt(N) * math.log(max(N, 3))):
            raise EnsembleError("L2Tail truncation tail is not o(N^-1/2); increase N or the truncation")
        U = np.zeros((N, r))
        U[:n] = l2tail_vectors(mode.ratios, n)
    else:
        raise EnsembleError(f"unknown deformation mode {mode!r}")

    if r and np.max(np.abs(U.conj().T @ U - np.eye(r))) > _ORTHO_TOL:
        raise EnsembleError("deformation block is not orthonormal")
    super_cols = [c for j, (t, _) in enumerate(spikes) if t > sigma for c in range(r)[_col_slice(spikes, j)]]
    span = _count_nonzero_rows(U[:, super_cols]) if super_cols else 0
    return Deformation(spikes, U, mode, span, float(np.max(np.abs(U))) if r else 0.0, tails)


def _col_slice(spikes, j):
    start = sum(k for _, k in spikes[:j])
    return slice(start, start + spikes[j][1])


@dataclass(frozen=True)
class DeformedMatrix:
    X: np.ndarray
    deformation: Deformation
    perturbation_norm: float

    @property
    def M(self):
        return assemble_dense(self.X, self.deformation)

    @property
    def N(self):
        return self.X.shape[0]


def hermitize(A):
    """Rebuild a self-adjoint matrix from its upper triangle."""
    upper = np.triu(A, 1)
    out = upper + upper.conj().T
    out[np.diag_indices(A.shape[0])] = np.real(np.diag(A))
    return out


def assemble_dense(X, deformation):
    if deformation.r == 0:
        return X.copy()
    A = deformation.matrix()
    M = X + A if np.iscomplexobj(A) or not np.iscomplexobj(X) else X + A.astype(X.dtype)
    return hermitize(M)


def assemble(X, deformation: Deformation) -> DeformedMatrix:
    """Pair ``X`` with the deformation; ``M = X + U Theta U*`` on demand."""
    X = np.asarray(X)
    if X.ndim != 2 or X.shape[0] != X.shape[1] or X.shape[0] != deformation.N:
        raise EnsembleError(f"dimension mismatch: X {X.shape} vs deformation N={deformation.N}")
    norm = float(np.max(np.abs(deformation.thetas))) if deformation.r else 0.0
    return DeformedMatrix(X, deformation, norm)
