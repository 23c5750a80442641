"""Experiment configuration: JSON loading, validation with field paths,
and translation into ensemble/deformation objects."""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .. import ensemble as en
from ..rng import FIXTURE_STREAM, trial_stream

EXPERIMENTS = (
    "semicircle",
    "outlier_location",
    "tightness",
    "caseA_law",
    "caseA1_law",
    "caseB_law",
    "prop1_reduction",
    "det_characterization",
    "bilinear_variance",
    "zeta_bound",
    "local_l2",
    "validators",
)

NEEDS_DEFORMATION = {
    "outlier_location",
    "tightness",
    "caseA_law",
    "caseA1_law",
    "caseB_law",
    "prop1_reduction",
    "det_characterization",
    "zeta_bound",
}

DEFAULT_THRESHOLDS = {
    "semicircle": {"ks": 0.03},
    "outlier_location": {},  # location_tol defaults to 0.05 (outlier) or 0.1 (edge)
    "tightness": {"iqr_ratio": 2.0},
    "caseA_law": {"ks": 0.08, "variance_rel": 0.2},
    "caseA1_law": {"ks": 0.08, "variance_rel": 0.2},
    "caseB_law": {"ks": 0.08},
    "prop1_reduction": {},
    "det_characterization": {"det_tol": 1e-8, "midpoint_min": 1e-4, "spectrum_gap": 1e-6},
    "bilinear_variance": {"var_ratio": 3.0, "bias_const": 5.0},
    "zeta_bound": {"frequency": 0.95},
    "local_l2": {"ks": 0.1},
    "validators": {},
}

HYPOTHESIS_WARNING = "k = o(sqrt(N)) hypothesis violated"


class ConfigError(ValueError):
    """Schema violation; ``path`` names the offending field."""

    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass
class ExperimentConfig:
    experiment: str
    N_list: list
    trials: int
    master_seed: int = 0
    ensemble: dict = field(default_factory=dict)
    deformation: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "N_list": list(self.N_list),
            "trials": self.trials,
            "master_seed": self.master_seed,
            "ensemble": self.ensemble,
            "deformation": self.deformation,
            "thresholds": self.thresholds,
            "params": self.params,
        }

    def config_hash(self):
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()

    def threshold(self, name, default=None):
        return self.thresholds.get(name, DEFAULT_THRESHOLDS[self.experiment].get(name, default))

    def with_seed(self, seed):
        out = copy.deepcopy(self)
        out.master_seed = int(seed)
        return out

    # -- builders ----------------------------------------------------------
    @property
    def beta(self):
        return int(self.ensemble.get("beta", 1))

    def wigner_spec(self, N) -> en.WignerSpec:
        return build_wigner_spec(self.ensemble, N)

    @property
    def sigma(self):
        return self.wigner_spec(max(self.N_list)).sigma

    def build_deformation(self, N) -> en.Deformation:
        """Deterministic per N: random modes draw from the fixture stream."""
        d = self.deformation
        rng = trial_stream(self.master_seed, N, FIXTURE_STREAM)
        return en.build_deformation(_spike_pairs(d), build_mode(d.get("mode")), N, rng, sigma=self.sigma)


def _spike_pairs(d):
    return [(s["theta"], s.get("multiplicity", 1)) for s in d.get("spikes", [])]


def _law_desc(desc, beta):
    if desc is None:
        return None
    if isinstance(desc, str):
        desc = {"kind": desc}
    desc = dict(desc)
    desc.setdefault("complex", beta == 2)
    return desc


def build_wigner_spec(ens: dict, N) -> en.WignerSpec:
    beta = int(ens.get("beta", 1))
    off = en.resolve_entry_law(_law_desc(ens.get("offdiag", "gaussian"), beta))
    diag_desc = ens.get("diag")
    diag = en.resolve_entry_law(_law_desc(diag_desc, 1)) if diag_desc is not None else None
    window = None
    w = ens.get("window")
    if w:
        corner = {}
        for item in w.get("corner", []):
            i, l = int(item["i"]), int(item["l"])
            corner[(i, l)] = en.resolve_entry_law(_law_desc(item["law"], beta if i != l else 1))
        rows = {}
        for item in w.get("rows", []):
            rows[int(item["i"])] = [(float(fr), en.resolve_entry_law(_law_desc(law, beta))) for fr, law in item["pieces"]]
        window = en.WindowOverride(int(w["K"]), corner, rows)
    return en.WignerSpec(N, beta, off, diag, window)


def build_mode(m):
    if m is None:
        return en.Localized()
    kind = m.get("kind", "localized")
    if kind == "localized":
        block = m.get("block")
        return en.Localized(None if block is None else np.asarray(block, float))
    if kind == "delocalized":
        return en.Delocalized(m.get("method", "qr"), float(m.get("support_exponent", 1.0)))
    if kind == "l2tail":
        return en.L2Tail(tuple(m.get("ratios", (0.5,))), m.get("truncation"))
    raise ConfigError("deformation.mode.kind", f"unknown mode {kind!r}")


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def _require(d, key, path):
    if key not in d:
        raise ConfigError(f"{path}{key}", "required field missing")
    return d[key]


def _is_int(v):
    return isinstance(v, (int, np.integer)) and not isinstance(v, bool)


def _is_num(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def config_from_dict(d: dict) -> ExperimentConfig:
    if not isinstance(d, dict):
        raise ConfigError("", "config must be a JSON object")
    exp = _require(d, "experiment", "")
    if exp not in EXPERIMENTS:
        raise ConfigError("experiment", f"unknown experiment {exp!r}; expected one of {', '.join(EXPERIMENTS)}")
    N_list = d.get("N_list", [] if exp == "validators" else None)
    if N_list is None:
        raise ConfigError("N_list", "required field missing")
    if not isinstance(N_list, list) or (exp != "validators" and not N_list):
        raise ConfigError("N_list", "must be a non-empty list")
    for i, N in enumerate(N_list):
        if not _is_int(N) or N < 1:
            raise ConfigError(f"N_list[{i}]", "must be a positive integer")
        if N > en.MAX_N:
            raise ConfigError(f"N_list[{i}]", f"exceeds the cap {en.MAX_N}")
    trials = d.get("trials", 1 if exp == "validators" else None)
    if not _is_int(trials) or trials < 0:
        raise ConfigError("trials", "must be a non-negative integer")
    seed = d.get("master_seed", 0)
    if not _is_int(seed) or seed < 0:
        raise ConfigError("master_seed", "must be a non-negative integer")

    ens = d.get("ensemble", {}) or {}
    if not isinstance(ens, dict):
        raise ConfigError("ensemble", "must be an object")
    beta = ens.get("beta", 1)
    if beta not in (1, 2):
        raise ConfigError("ensemble.beta", "must be 1 or 2")

    deform = d.get("deformation", {}) or {}
    if exp in NEEDS_DEFORMATION:
        _require(d, "deformation", "")
        spikes = _require(deform, "spikes", "deformation.")
        if not isinstance(spikes, list):
            raise ConfigError("deformation.spikes", "must be a list")
        for i, s in enumerate(spikes):
            p = f"deformation.spikes[{i}]"
            if not isinstance(s, dict):
                raise ConfigError(p, "must be an object with theta and multiplicity")
            th = _require(s, "theta", p + ".")
            if not _is_num(th):
                raise ConfigError(p + ".theta", "must be a finite number")
            if th == 0:
                raise ConfigError(p + ".theta", "must be nonzero")
            k = s.get("multiplicity", 1)
            if not _is_int(k) or k < 1:
                raise ConfigError(p + ".multiplicity", "must be a positive integer")
            if i and not th < spikes[i - 1]["theta"]:
                raise ConfigError(p + ".theta", "spikes must be strictly decreasing")

    thresholds = d.get("thresholds", {}) or {}
    for k, v in thresholds.items():
        if not _is_num(v) or v <= 0:
            raise ConfigError(f"thresholds.{k}", "must be a positive number")

    params = d.get("params", {}) or {}
    if exp == "caseA1_law" and not ens.get("window"):
        raise ConfigError("ensemble.window", "caseA1_law needs a window override")
    if exp == "bilinear_variance":
        _require(params, "function", "params.")
    if exp == "local_l2":
        x = params.get("x", 2.5)
        if not _is_num(x):
            raise ConfigError("params.x", "must be a number")
    if exp in ("tightness", "prop1_reduction") and len(set(N_list)) < (3 if exp == "prop1_reduction" else 2):
        raise ConfigError("N_list", f"{exp} needs {'3' if exp == 'prop1_reduction' else '2'} or more distinct N")
    if exp == "bilinear_variance" and len(set(N_list)) < 2:
        raise ConfigError("N_list", "bilinear_variance needs 2 or more distinct N")

    cfg = ExperimentConfig(exp, list(N_list), int(trials), int(seed), ens, deform, thresholds, params, d.get("output"))
    _semantic_checks(cfg)
    return cfg


def _semantic_checks(cfg: ExperimentConfig):
    try:
        for N in cfg.N_list:
            cfg.wigner_spec(N)
    except (en.EnsembleError, KeyError, TypeError) as exc:
        raise ConfigError("ensemble", str(exc)) from exc
    if cfg.experiment not in NEEDS_DEFORMATION:
        return
    try:
        build_mode(cfg.deformation.get("mode"))
        defs = {N: cfg.build_deformation(N) for N in cfg.N_list}
    except en.EnsembleError as exc:
        raise ConfigError("deformation", str(exc)) from exc
    if cfg.experiment == "caseB_law":
        bad = [N for N, D in defs.items() if D.span_count >= math.sqrt(N)]
        if bad:
            cfg.warnings.append(f"{HYPOTHESIS_WARNING}: span_count >= sqrt(N) at N={bad}")
    sigma = cfg.sigma
    if cfg.experiment in ("tightness", "caseA_law", "caseA1_law", "caseB_law", "prop1_reduction", "zeta_bound"):
        if not any(t > sigma for t, _ in _spike_pairs(cfg.deformation)):
            raise ConfigError("deformation.spikes", f"{cfg.experiment} needs a spike with theta > sigma={sigma}")
    if cfg.experiment in ("caseA_law", "caseA1_law") and not isinstance(build_mode(cfg.deformation.get("mode")), en.Localized):
        raise ConfigError("deformation.mode.kind", "case A experiments need a localized deformation")


def load_config(path) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            d = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"parse error in {path}: {exc}") from exc
    return config_from_dict(d)
