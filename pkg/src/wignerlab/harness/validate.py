"""Deterministic validator suites: cumulant expansion, resolvent identities,
the functional calculus and block perturbation."""

from __future__ import annotations

import numpy as np

from .. import funcalc as fc
from ..spectral import spectral_apply
from ..ensemble import WignerSpec, resolve_entry_law, sample_wigner
from ..rng import trial_stream

SUITES = ("appendix", "hs", "blocks")


def _check(name, value, threshold, op="<="):
    ok = value <= threshold if op == "<=" else value >= threshold
    return {"name": name, "value": float(value), "threshold": float(threshold), "op": op, "ok": bool(ok)}


def _sym(rng, n, scale=1.0):
    A = rng.standard_normal((n, n))
    return scale * (A + A.T) / np.sqrt(2 * n)


def appendix_suite(seed=0):
    rng = trial_stream(seed, 0, 10)
    out = []
    rad, gau = resolve_entry_law("rademacher"), resolve_entry_law("gaussian")
    d = fc.check_decoupling(rad, [0, 0, 0, 1], 3)
    out.append(_check("decoupling rademacher x^3 p=3", abs(d.epsilon), 1e-12))
    d = fc.check_decoupling(gau, [0, 1], 1)
    out.append(_check("decoupling gaussian x p=1", abs(d.epsilon), 1e-12))
    d = fc.check_decoupling(gau, [0, 0, 1], 1)
    out.append(_check("decoupling gaussian x^2 p=1", abs(d.epsilon), 1e-12))
    X1, X2 = _sym(rng, 20), _sym(rng, 20)
    out.append(_check("resolvent identity N=20", fc.check_resolvent_identity(X1, X2, 0.3 + 0.7j), 1e-10))
    out.append(_check("resolvent identity scalar", fc.check_resolvent_identity(np.zeros((1, 1)), np.eye(1), 3.0), 1e-15))
    X = _sym(rng, 8)
    worst = 0.0
    for p, q in [(0, 1), (2, 5), (3, 3)]:
        c = fc.check_resolvent_derivatives(X, 0.2 + 0.5j, p, q)
        worst = max(worst, c.symmetric, 0.0 if np.isnan(c.imaginary) else c.imaginary)
    Xh = sample_wigner(WignerSpec(8, beta=2), rng)
    for p, q in [(0, 1), (4, 6)]:
        c = fc.check_resolvent_derivatives(Xh, 0.1 + 0.4j, p, q)
        worst = max(worst, c.symmetric, c.imaginary)
    out.append(_check("resolvent derivatives vs central differences", worst, 1e-6))
    out.append(_check("resolvent entry bound", 0.0 if fc.resolvent_entry_bound_ok(X, 0.1 + 0.05j) else 1.0, 0.0))
    return out


def hs_suite(seed=0):
    rng = trial_stream(seed, 0, 11)
    X = _sym(rng, 50)
    f = fc.TestFunction.poly_bump(3.0, 6, (1.0, 0.5))
    out = [_check("test function derivatives vs finite differences", f.check_derivatives(), 1e-6)]
    base = fc.HSQuadrature()
    ref = spectral_apply(X, f)
    nref = np.linalg.norm(ref)
    r0 = fc.hs_apply(X, f, base)
    err0 = np.linalg.norm(r0 - ref) / nref
    out.append(_check("HS vs spectral calculus N=50", err0, 1e-3))
    variants = [fc.HSQuadrature(l=5), fc.HSQuadrature(bump=fc.Bump(2)), fc.HSQuadrature(l=5, bump=fc.Bump(2))]
    worst = 0.0
    qerr = err0
    for q in variants:
        r = fc.hs_apply(X, f, q)
        qerr = max(qerr, np.linalg.norm(r - ref) / nref)
        worst = max(worst, np.linalg.norm(r - r0) / nref)
    out.append(_check("HS independence of l and cut-off (relative to 2x quadrature error)", worst / (2 * qerr), 1.0))
    return out


def blocks_suite(seed=0):
    eps = 0.01
    shift = abs(fc.two_by_two_shift(eps))
    out = [_check("2x2 block shift <= 2 eps^2", shift, 2 * eps**2)]
    out.append(_check("zero coupling shift", fc.check_block_perturbation((3, 3), 1.0, 0.0, trial_stream(seed, 0, 12), 20).max_shift, 1e-14))
    c = fc.check_block_perturbation((3, 3), 1.0, 0.05, trial_stream(seed, 1, 12), 1000)
    out.append(_check("random 6x6 shift <= 10 eps^2", c.max_shift, 10 * 0.05**2))
    return out


def run_suite(name="all", seed=0):
    names = SUITES if name == "all" else (name,)
    out = []
    for n in names:
        if n not in SUITES:
            raise ValueError(f"unknown suite {n!r}")
        out.extend({**c, "suite": n} for c in globals()[f"{n}_suite"](seed))
    return out
