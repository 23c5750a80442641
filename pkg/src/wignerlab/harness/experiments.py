"""Per-trial computations and record-level verdicts for every experiment.

A trial returns ``(rows, aux)``: ``rows`` are per-eigenvalue observables
(the CSV columns), ``aux`` holds trial scalars. Verdicts are computed from
persisted records only, so a results directory can be re-analysed offline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import ensemble as en
from .. import funcalc as fc
from .. import limitlaw as ll
from .. import outlier as ol
from .. import spectral as sp
from .. import stats as st
from ..rng import FIXTURE_STREAM, REFERENCE_STREAM, trial_stream
from .config import ExperimentConfig
from .validate import run_suite

OUTLIER_FAMILY = ("outlier_location", "tightness", "caseA_law", "caseA1_law", "caseB_law", "prop1_reduction")


@dataclass
class NContext:
    """Per-N objects shared (read-only) by all trials at that N."""

    N: int
    spec: en.WignerSpec
    deformation: en.Deformation | None = None
    prediction: ol.OutlierPrediction | None = None
    extras: dict = field(default_factory=dict)


def build_context(cfg: ExperimentConfig, N) -> NContext:
    spec = cfg.wigner_spec(N)
    ctx = NContext(N, spec)
    sigma = spec.sigma
    if cfg.deformation.get("spikes") is not None and cfg.experiment != "validators":
        D = cfg.build_deformation(N)
        ctx.deformation = D
        ctx.prediction = ol.predict_outliers(D, sigma)
    fix = trial_stream(cfg.master_seed, N, FIXTURE_STREAM + 100)
    if cfg.experiment == "bilinear_variance":
        u, v = fix.standard_normal(N), fix.standard_normal(N)
        ctx.extras["u"] = u / np.linalg.norm(u)
        ctx.extras["v"] = v / np.linalg.norm(v)
        ctx.extras["f"] = make_test_function(cfg.params["function"])
    if cfg.experiment == "zeta_bound":
        D = ctx.deformation
        ctx.extras["window"] = ol.make_window(D, sigma, N, cfg.params.get("delta", 0.25 * sigma))
        if cfg.params.get("vectors", "deformation") == "random":
            u, v = fix.standard_normal(N), fix.standard_normal(N)
            ctx.extras["u"], ctx.extras["v"] = u / np.linalg.norm(u), v / np.linalg.norm(v)
        else:
            ctx.extras["u"] = ctx.extras["v"] = D.U[:, 0]
    if cfg.experiment == "local_l2":
        ctx.extras["u"] = local_vector(cfg, N)
    return ctx


def make_test_function(desc):
    kind = desc.get("kind", "bump")
    if kind == "bump":
        return fc.TestFunction.poly_bump(float(desc.get("L", 3.0)), int(desc.get("power", 6)), tuple(desc.get("prefactor", (1.0,))))
    if kind == "gaussian":
        return fc.TestFunction.gaussian(float(desc.get("scale", 1.0)))
    raise ValueError(f"unknown test function kind {kind!r}")


def local_vector(cfg, N):
    """Unit vector with coordinates proportional to ``q^k`` (exact l^2 normalisation)."""
    q = float(cfg.params.get("ratio", 0.5))
    n = min(N, int(cfg.params.get("length", 64)))
    u = np.zeros(N)
    u[:n] = en.l2tail_vectors((q,), n)[:, 0]
    return u


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------


def _outlier_rows(ctx: NContext, w, N):
    rows = []
    D, pred = ctx.deformation, ctx.prediction
    for j, (theta, _) in enumerate(D.spikes):
        p = next((s for s in pred.spikes if s.theta == theta), None)
        if p is None:
            continue
        for i, idx in enumerate(p.indices):
            lam = float(w[idx])
            rows.append(
                {
                    "block": j,
                    "eig_index": i,
                    "lambda": lam,
                    "rho": p.rho,
                    "scaled_fluct": p.c_theta * math.sqrt(N) * (lam - p.rho),
                    "prop1_residual": None,
                }
            )
    return rows


def trial_outliers(cfg, ctx: NContext, rng):
    N = ctx.N
    X = en.sample_wigner(ctx.spec, rng)
    M = en.assemble_dense(X, ctx.deformation)
    pred = ctx.prediction
    if pred.J_minus == 0:
        top = max(pred.k_plus, 1)
        w = np.full(N, np.nan)
        w[:top] = sp.eig_sym(M, subset=(0, top - 1)).eigenvalues
    else:
        w = sp.eigvals_desc(M)
    rows = _outlier_rows(ctx, w, N)
    aux = {"lambda1": float(w[0])}
    if cfg.experiment == "prop1_reduction":
        sigma = ctx.spec.sigma
        worst = 0.0
        for j, (theta, _) in enumerate(ctx.deformation.spikes):
            if theta <= sigma:
                continue
            res = ol.prop1_residuals(w, X, ctx.deformation, j, sigma, prediction=pred)
            for row in rows:
                if row["block"] == j:
                    row["prop1_residual"] = float(res[row["eig_index"]])
            worst = max(worst, float(np.max(np.abs(res))))
        aux["max_abs_residual"] = worst
    return rows, aux


def trial_semicircle(cfg, ctx, rng):
    X = en.sample_wigner(ctx.spec, rng)
    w = sp.eigvals_desc(X)
    ks = st.ks_one_sample(w, lambda x: sp.semicircle_cdf(x, ctx.spec.sigma))
    return [], {"ks": ks, "eigenvalues": [float(t) for t in w]}


def trial_det(cfg, ctx, rng):
    X = en.sample_wigner(ctx.spec, rng)
    D = ctx.deformation
    M = en.assemble_dense(X, D)
    s = sp.eigvals_desc(X)
    w = sp.eigvals_desc(M)
    gap = cfg.threshold("spectrum_gap")
    M_norm = float(np.max(np.abs(w)))
    worst_rel, worst_raw, checked = 0.0, 0.0, 0
    for mu in w:
        if np.min(np.abs(s - mu)) <= gap:
            continue
        d = abs(ol.master_det(X, D, mu, spectrum=s))
        cond = ol.master_det_condition(X, D, mu, M_norm, s)
        worst_rel = max(worst_rel, d / (1 + cond))
        worst_raw = max(worst_raw, d)
        checked += 1
    mids = (w[1:] + w[:-1]) / 2
    mins = [abs(ol.master_det(X, D, x, spectrum=s)) for x in mids if np.min(np.abs(s - x)) > gap and np.min(np.abs(w - x)) > gap]
    return [], {
        "max_rel_det": worst_rel,
        "max_raw_det": worst_raw,
        "n_checked": checked,
        "min_mid_det": float(min(mins)) if mins else None,
    }


def trial_bilinear(cfg, ctx, rng):
    X = en.sample_wigner(ctx.spec, rng)
    sd = sp.eig_sym(X, want_vectors=True)
    f, u, v = ctx.extras["f"], ctx.extras["u"], ctx.extras["v"]
    a = sd.eigenvectors.T @ u
    b = sd.eigenvectors.T @ v
    return [], {"value": float(np.sum(a * f(sd.eigenvalues) * b))}


def trial_zeta(cfg, ctx, rng):
    X = en.sample_wigner(ctx.spec, rng)
    s = sp.eigvals_desc(X)
    scan = ol.zeta_scan(X, ctx.extras["window"], ctx.extras["u"], ctx.extras["v"], ctx.spec.sigma, s)
    N = ctx.N
    return [], {"max": scan.max_abs, "argmax": scan.argmax, "bound": math.log(N) * N ** (1 / 6)}


def trial_local(cfg, ctx, rng):
    X = en.sample_wigner(ctx.spec, rng)
    x = float(cfg.params.get("x", 2.5))
    u = ctx.extras["u"]
    q = sp.resolvent_bilinear(X, x, u, u)
    g = sp.stieltjes(x, ctx.spec.sigma)
    return [], {"value": float(math.sqrt(ctx.N) * (np.real(q) - g))}


def trial_validators(cfg, ctx, rng):
    checks = run_suite(cfg.params.get("suite", "all"), cfg.master_seed)
    return [], {"checks": checks}


TRIALS = {
    "semicircle": trial_semicircle,
    "det_characterization": trial_det,
    "bilinear_variance": trial_bilinear,
    "zeta_bound": trial_zeta,
    "local_l2": trial_local,
    "validators": trial_validators,
    **{name: trial_outliers for name in OUTLIER_FAMILY},
}


def run_trial(cfg, ctx, rng):
    return TRIALS[cfg.experiment](cfg, ctx, rng)


# ---------------------------------------------------------------------------
# verdicts
# ---------------------------------------------------------------------------


def verdict(clause, value, threshold, op="<="):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        status = "FAIL"
    elif op == "<=":
        status = "PASS" if value <= threshold else "FAIL"
    elif op == ">=":
        status = "PASS" if value >= threshold else "FAIL"
    elif op == "<":
        status = "PASS" if value < threshold else "FAIL"
    else:
        status = "PASS" if value > threshold else "FAIL"
    return {"clause": clause, "value": value, "threshold": threshold, "op": op, "status": status}


@dataclass
class Analysis:
    verdicts: list
    summary: dict
    plots: list


def _by_N(records):
    out = {}
    for r in records:
        out.setdefault(r["N"], []).append(r)
    return dict(sorted(out.items()))


def _rows(records, block=0, eig_index=0, key="scaled_fluct"):
    return np.array(
        [row[key] for r in records for row in r["rows"] if row["block"] == block and row["eig_index"] == eig_index and row[key] is not None],
        float,
    )


def _aux(records, key):
    return np.array([r["aux"][key] for r in records if r["aux"].get(key) is not None], float)


def _reference_rng(cfg, tag=0):
    return trial_stream(cfg.master_seed, tag, REFERENCE_STREAM)


def _summ(values, cfg, tag=0):
    if len(values) < 2:
        return None
    s = st.summarize(values, rng=trial_stream(cfg.master_seed, tag, REFERENCE_STREAM + 10), resamples=500)
    return {
        "n": s.n,
        "mean": s.mean,
        "variance": s.variance,
        "se_mean": s.se_mean,
        "quantiles": {str(k): v for k, v in s.quantiles.items()},
        "mean_ci": list(s.mean_ci),
        "variance_ci": list(s.variance_ci),
    }


def analyze_semicircle(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    thr = cfg.threshold("ks")
    for N, recs in _by_N(records).items():
        ks = _aux(recs, "ks")
        out.append(verdict(f"semicircle KS at N={N} (max over {len(ks)} trials)", float(ks.max()), thr))
        summ[str(N)] = {"ks_max": float(ks.max()), "ks_mean": float(ks.mean())}
        eigs = np.concatenate([np.asarray(r["aux"]["eigenvalues"]) for r in recs])
        sigma = ctxs[N].spec.sigma
        plots.append({"kind": "hist", "name": f"semicircle_N{N}", "sample": eigs, "density": lambda x, s=sigma: sp.semicircle_density(x, s)})
    return Analysis(out, summ, plots)


def _location_tol(cfg, pred):
    t = cfg.thresholds.get("location_tol")
    return t if t is not None else (0.05 if pred.J_plus else 0.1)


def analyze_location(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    for N, recs in _by_N(records).items():
        pred = ctxs[N].prediction
        lam1 = _aux(recs, "lambda1")
        target = pred.expected_top()
        tol = _location_tol(cfg, pred)
        m = float(lam1.mean())
        out.append(verdict(f"|mean lambda1 - {target:.6g}| at N={N}", abs(m - target), tol))
        summ[str(N)] = {"mean_lambda1": m, "target": target, "summary": _summ(lam1, cfg, N)}
        plots.append({"kind": "hist", "name": f"lambda1_N{N}", "sample": lam1, "vline": target})
    return Analysis(out, summ, plots)


def analyze_tightness(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    iqrs = {}
    for N, recs in _by_N(records).items():
        p = ctxs[N].prediction.positive[0]
        vals = _rows(recs, 0, 0) / p.c_theta  # sqrt(N) (lambda1 - rho)
        if len(vals) < 4:
            continue
        iqrs[N] = st.iqr(vals)
        summ[str(N)] = {"iqr": iqrs[N], "summary": _summ(vals, cfg, N)}
    if len(iqrs) >= 2:
        ratio = max(iqrs.values()) / min(iqrs.values())
        out.append(verdict("max/min IQR of sqrt(N)(lambda1 - rho)", ratio, cfg.threshold("iqr_ratio")))
        plots.append({"kind": "loglog", "name": "iqr_vs_N", "N": list(iqrs), "values": list(iqrs.values()), "ylabel": "IQR"})
    else:
        out.append(verdict("IQR ratio needs two N with data", None, cfg.threshold("iqr_ratio")))
    return Analysis(out, summ, plots)


def _support_rows(U):
    nz = np.flatnonzero(np.any(U != 0, axis=1))
    return int(nz[-1]) + 1 if nz.size else 0


def case_a_limit(cfg, ctx: NContext, j) -> ll.CaseALimitSpec:
    D = ctx.deformation
    spec = ctx.spec
    cols = D.U[:, D.columns(j)]
    K = _support_rows(cols)
    U = cols[:K]
    window = spec.window
    corner = None
    kappa4 = spec.offdiag_law.fourth_cumulant
    if window is not None:
        corner = {key: law for key, law in window.corner.items() if key[1] < K}
        kappa4 = np.array(
            [ll.kappa4_row(window, i, spec.beta, spec.offdiag_law) if i < window.K else spec.offdiag_law.fourth_cumulant for i in range(K)]
        )
    return ll.CaseALimitSpec(D.spikes[j][0], spec.sigma, U, spec.offdiag_law, spec.diag_law, spec.beta, kappa4, corner)


def analyze_case_a(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    n_ref = int(cfg.params.get("reference_draws", 50000))
    ks_thr, var_thr = cfg.threshold("ks"), cfg.threshold("variance_rel")
    for N, recs in _by_N(records).items():
        ctx = ctxs[N]
        sigma = ctx.spec.sigma
        for j, (theta, k) in enumerate(ctx.deformation.spikes):
            if theta <= sigma:
                continue
            lim = case_a_limit(cfg, ctx, j)
            ref = ll.sample_Vj(lim, _reference_rng(cfg, 1000 * j), n_ref)
            for i in range(k):
                vals = _rows(recs, j, i)
                if not len(vals):
                    continue
                ks = st.ks_two_sample(vals, ref[:, i])
                out.append(verdict(f"KS(c sqrt(N)(lambda - rho), V limit) spike {j} eig {i} N={N}", ks, ks_thr))
                entry = {"ks": ks, "summary": _summ(vals, cfg, N), "limit_mean": float(ref[:, i].mean()), "limit_variance": float(ref[:, i].var())}
                if k == 1 and len(vals) > 1:
                    v_lim = ll.case_a_variance(lim)
                    rel = abs(float(np.var(vals, ddof=1)) / v_lim - 1)
                    out.append(verdict(f"relative variance gap vs {v_lim:.6g} spike {j} N={N}", rel, var_thr))
                    entry["limit_variance_exact"] = v_lim
                summ[f"{N}/spike{j}/eig{i}"] = entry
                name = f"N{N}_spike{j}_eig{i}"
                plots.append({"kind": "hist", "name": f"hist_{name}", "sample": vals, "reference": ref[:, i]})
                plots.append({"kind": "ecdf", "name": f"ecdf_{name}", "sample": vals, "reference": ref[:, i]})
                plots.append({"kind": "qq", "name": f"qq_{name}", "sample": vals, "reference": ref[:, i]})
    return Analysis(out, summ, plots)


def analyze_case_b(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    n_ref = int(cfg.params.get("reference_draws", 50000))
    thr = cfg.threshold("ks")
    for N, recs in _by_N(records).items():
        ctx = ctxs[N]
        sigma, beta = ctx.spec.sigma, ctx.spec.beta
        for j, (theta, k) in enumerate(ctx.deformation.spikes):
            if theta <= sigma:
                continue
            v = ll.goe_block_variance(theta, sigma)
            ref = ll.sample_goe_block(k, theta, sigma, beta, _reference_rng(cfg, 1000 * j), n_ref)
            for i in range(k):
                vals = _rows(recs, j, i)
                if not len(vals):
                    continue
                if k == 1:
                    ks = st.ks_one_sample(vals, st.normal_cdf((2 / beta) * v))
                    label = f"KS vs N(0, {(2 / beta) * v:.6g})"
                else:
                    ks = st.ks_two_sample(vals, ref[:, i])
                    label = f"KS vs GOE/GUE block eig {i}"
                out.append(verdict(f"{label} spike {j} N={N}", ks, thr))
                summ[f"{N}/spike{j}/eig{i}"] = {"ks": ks, "summary": _summ(vals, cfg, N), "limit_variance": (2 / beta) * v if k == 1 else None}
                name = f"N{N}_spike{j}_eig{i}"
                plots.append({"kind": "hist", "name": f"hist_{name}", "sample": vals, "reference": ref[:, i]})
                plots.append({"kind": "ecdf", "name": f"ecdf_{name}", "sample": vals, "reference": ref[:, i]})
                plots.append({"kind": "qq", "name": f"qq_{name}", "sample": vals, "reference": ref[:, i]})
    return Analysis(out, summ, plots)


def analyze_prop1(cfg, records, ctxs):
    out, summ = [], {}
    med = {}
    for N, recs in _by_N(records).items():
        vals = _aux(recs, "max_abs_residual")
        if len(vals):
            med[N] = float(np.median(vals))
            summ[str(N)] = {"median_max_abs_residual": med[N], "summary": _summ(vals, cfg, N)}
    Ns = sorted(med)
    dec = all(med[a] > med[b] for a, b in zip(Ns, Ns[1:])) and len(Ns) >= 2
    out.append(verdict("medians strictly decrease in N (1 = yes)", 1.0 if dec else 0.0, 1.0, ">="))
    plots = []
    if len(set(Ns)) >= 3:
        fit = st.rate_fit([(N, med[N]) for N in Ns])
        summ["rate_fit"] = {"slope": fit.slope, "ci": list(fit.ci)}
        out.append(verdict("rate_fit slope of median residual", fit.slope, 0.0, "<"))
        plots.append({"kind": "loglog", "name": "prop1_residual_vs_N", "N": Ns, "values": [med[N] for N in Ns], "ylabel": "median max |residual|"})
    else:
        out.append(verdict("rate_fit needs 3 distinct N", None, 0.0, "<"))
    return Analysis(out, summ, plots)


def analyze_det(cfg, records, ctxs):
    out, summ = [], {}
    rel = _aux(records, "max_rel_det")
    mids = _aux(records, "min_mid_det")
    out.append(verdict("max relative |det| at eigenvalues of M", float(rel.max()), cfg.threshold("det_tol")))
    if len(mids):
        out.append(verdict("min |det| at midpoints", float(mids.min()), cfg.threshold("midpoint_min"), ">="))
    summ["n_checked"] = int(_aux(records, "n_checked").sum())
    summ["max_raw_det"] = float(_aux(records, "max_raw_det").max())
    return Analysis(out, summ, [])


def analyze_bilinear(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    nvar = {}
    byN = _by_N(records)
    for N, recs in byN.items():
        vals = _aux(recs, "value")
        if len(vals) > 1:
            nvar[N] = N * float(np.var(vals, ddof=1))
            summ[str(N)] = {"N_var": nvar[N], "summary": _summ(vals, cfg, N)}
    if len(nvar) >= 2:
        ratio = max(nvar.values()) / min(nvar.values())
        out.append(verdict("max/min N Var <u, f(X) v>", ratio, cfg.threshold("var_ratio")))
        plots.append({"kind": "loglog", "name": "N_var_vs_N", "N": list(nvar), "values": list(nvar.values()), "ylabel": "N Var"})
    Nmax = max(byN)
    ctx = ctxs[Nmax]
    f = ctx.extras["f"]
    vals = _aux(byN[Nmax], "value")
    target = float(ctx.extras["u"] @ ctx.extras["v"]) * sp.semicircle_integral(f, ctx.spec.sigma)
    scale = f.norms(0).c_n
    bias = abs(float(vals.mean()) - target)
    out.append(verdict(f"|mean - <u,v> int f dmu| at N={Nmax}", bias, cfg.threshold("bias_const") / math.sqrt(Nmax) * scale))
    summ["bias"] = {"N": Nmax, "bias": bias, "target": target, "scale": scale}
    return Analysis(out, summ, plots)


def analyze_zeta(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    for N, recs in _by_N(records).items():
        m, b = _aux(recs, "max"), _aux(recs, "bound")
        freq = float(np.mean(m <= b))
        out.append(verdict(f"frequency of max|zeta| <= log N N^(1/6) at N={N}", freq, cfg.threshold("frequency"), ">="))
        summ[str(N)] = {"frequency": freq, "bound": float(b[0]), "max_of_max": float(m.max()), "summary": _summ(m, cfg, N)}
        plots.append({"kind": "hist", "name": f"zeta_max_N{N}", "sample": m, "vline": float(b[0])})
    return Analysis(out, summ, plots)


def local_reference(cfg, ctx: NContext, n_ref):
    x = float(cfg.params.get("x", 2.5))
    K = int(cfg.params.get("K", 12))
    spec = ctx.spec
    ups = ll.UpsilonSpec(x, spec.sigma, K, spec.beta, spec.offdiag_law, spec.diag_law)
    u = ctx.extras["u"][:K]
    draws = ll.sample_upsilon(ups, _reference_rng(cfg, 7), n_ref)
    return np.real(np.einsum("i,nij,j->n", u, draws, u)), ll.upsilon_form_variance(ups, u)


def analyze_local(cfg, records, ctxs):
    out, summ, plots = [], {}, []
    n_ref = int(cfg.params.get("reference_draws", 20000))
    for N, recs in _by_N(records).items():
        vals = _aux(recs, "value")
        ref, var = local_reference(cfg, ctxs[N], n_ref)
        ks = st.ks_two_sample(vals, ref)
        out.append(verdict(f"KS(sqrt(N)(<u,R u> - g), <u, Upsilon u>) N={N}", ks, cfg.threshold("ks")))
        summ[str(N)] = {"ks": ks, "limit_variance": var, "summary": _summ(vals, cfg, N)}
        plots.append({"kind": "hist", "name": f"hist_local_N{N}", "sample": vals, "reference": ref})
        plots.append({"kind": "ecdf", "name": f"ecdf_local_N{N}", "sample": vals, "reference": ref})
        plots.append({"kind": "qq", "name": f"qq_local_N{N}", "sample": vals, "reference": ref})
    return Analysis(out, summ, plots)


def analyze_validators(cfg, records, ctxs):
    out = []
    for r in records:
        for c in r["aux"]["checks"]:
            out.append(verdict(f"[{c['suite']}] {c['name']}", c["value"], c["threshold"], c["op"]))
    return Analysis(out, {}, [])


ANALYZERS = {
    "semicircle": analyze_semicircle,
    "outlier_location": analyze_location,
    "tightness": analyze_tightness,
    "caseA_law": analyze_case_a,
    "caseA1_law": analyze_case_a,
    "caseB_law": analyze_case_b,
    "prop1_reduction": analyze_prop1,
    "det_characterization": analyze_det,
    "bilinear_variance": analyze_bilinear,
    "zeta_bound": analyze_zeta,
    "local_l2": analyze_local,
    "validators": analyze_validators,
}


def analyze(cfg, records, ctxs) -> Analysis:
    ok = [r for r in records if r.get("status") == "ok"]
    if not ok:
        return Analysis([{"clause": "no completed trials", "value": None, "threshold": None, "op": None, "status": "SKIPPED"}], {}, [])
    return ANALYZERS[cfg.experiment](cfg, ok, ctxs)
