"""Parallel, resumable Monte Carlo sweeps with per-trial persistence."""

from __future__ import annotations

import json
import logging
import os
import platform
import time
import traceback
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy

from .. import __version__
from ..rng import derive_seed, stream_from_seed
from .config import ExperimentConfig
from .experiments import Analysis, analyze, build_context, run_trial

log = logging.getLogger(__name__)

THREADS_ENV = "WIGNERLAB_THREADS"
RECORDS = "records.jsonl"
CONFIG = "config.json"


@dataclass
class ReportBundle:
    config: ExperimentConfig
    manifest: dict
    records: list
    verdicts: list
    summary: dict
    plots: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)

    @property
    def passed(self):
        return all(v["status"] in ("PASS", "SKIPPED") for v in self.verdicts)


def default_threads():
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


def trial_plan(cfg: ExperimentConfig):
    """``(trial_index, N)`` pairs; indices run over the whole sweep."""
    Ns = cfg.N_list or ([1] if cfg.experiment == "validators" else [])
    return [(i * cfg.trials + t, N) for i, N in enumerate(Ns) for t in range(cfg.trials)]


def execute_trial(cfg, ctx, trial, N):
    seed = derive_seed(cfg.master_seed, trial)
    rec = {"trial": trial, "N": N, "seed": seed}
    try:
        rows, aux = run_trial(cfg, ctx, stream_from_seed(seed))
        rec.update(status="ok", rows=rows, aux=aux)
    except Exception as exc:  # recorded, the sweep goes on
        rec.update(status="failed", rows=[], aux={}, error=f"{type(exc).__name__}: {exc}")
        log.debug("trial %d failed\n%s", trial, traceback.format_exc())
    return rec


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serialisable: {type(o)}")


def dumps(obj, **kw):
    return json.dumps(obj, sort_keys=True, default=_json_default, **kw)


def read_records(path):
    out = {}
    p = Path(path)
    if not p.exists():
        return out
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # torn final line from an interrupted run
            out[rec["trial"]] = rec
    return out


def _prepare_dir(cfg, out):
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    cpath = out / CONFIG
    stored = None
    if cpath.exists():
        stored = json.loads(cpath.read_text(encoding="utf-8"))
    if stored is not None and stored.get("hash") != cfg.config_hash():
        raise RuntimeError(f"{out} holds results of a different configuration; use a fresh --out")
    cpath.write_text(dumps({"config": cfg.to_dict(), "hash": cfg.config_hash()}, indent=2) + "\n", encoding="utf-8")
    return out


def contexts(cfg):
    Ns = sorted(set(cfg.N_list or ([1] if cfg.experiment == "validators" else [])))
    return {N: build_context(cfg, N) for N in Ns}


def run(cfg: ExperimentConfig, out=None, threads=None, formats=("csv", "json", "svg")) -> ReportBundle:
    """Run every missing trial, persist records, aggregate and emit."""
    from .emit import emit

    t0 = time.perf_counter()
    threads = threads or default_threads()
    out = out or cfg.output
    for w in cfg.warnings:
        log.warning(w)
    ctxs = contexts(cfg)
    plan = trial_plan(cfg)
    done = {}
    rec_path = None
    if out is not None:
        outdir = _prepare_dir(cfg, out)
        rec_path = outdir / RECORDS
        done = read_records(rec_path)
    todo = [(t, N) for t, N in plan if t not in done or done[t].get("status") != "ok"]
    fh = open(rec_path, "a", encoding="utf-8") if rec_path is not None else None
    try:
        if threads > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                futs = [pool.submit(execute_trial, cfg, ctxs[N], t, N) for t, N in todo]
                for fut in futs:
                    _store(done, fut.result(), fh)
        else:
            for t, N in todo:
                _store(done, execute_trial(cfg, ctxs[N], t, N), fh)
    finally:
        if fh is not None:
            fh.close()
    wanted = {t for t, _ in plan}
    records = [done[t] for t in sorted(done) if t in wanted]
    bundle = aggregate(cfg, records, ctxs, wall_time=time.perf_counter() - t0, threads=threads)
    if out is not None:
        emit(bundle, out, formats)
    return bundle


def _store(done, rec, fh):
    done[rec["trial"]] = rec
    if fh is not None:
        fh.write(dumps(rec) + "\n")
        fh.flush()


def aggregate(cfg, records, ctxs=None, wall_time=None, threads=1) -> ReportBundle:
    """Verdicts and summaries from records alone (sorted by trial index)."""
    records = sorted(records, key=lambda r: r["trial"])
    ctxs = ctxs or contexts(cfg)
    failures = [r for r in records if r.get("status") != "ok"]
    if cfg.trials == 0:
        analysis = Analysis([{"clause": "trials = 0", "value": None, "threshold": None, "op": None, "status": "SKIPPED"}], {}, [])
    elif records and len(failures) == len(records):
        analysis = Analysis([{"clause": "every trial failed", "value": len(failures), "threshold": 0, "op": "<=", "status": "FAIL"}], {}, [])
    else:
        analysis = analyze(cfg, records, ctxs)
    manifest = {
        "experiment": cfg.experiment,
        "config_hash": cfg.config_hash(),
        "master_seed": cfg.master_seed,
        "N_list": cfg.N_list,
        "trials_requested": cfg.trials,
        "trials_recorded": len(records),
        "failure_count": len(failures),
        "failures": [{"trial": r["trial"], "error": r.get("error")} for r in failures],
        "warnings": list(cfg.warnings),
        "versions": {
            "wignerlab": __version__,
            "numpy": np.__version__,
            "scipy": scipy.__version__,
            "python": platform.python_version(),
        },
        "wall_time_s": wall_time,
        "threads": threads,
        "verdict": "PASS" if all(v["status"] in ("PASS", "SKIPPED") for v in analysis.verdicts) else "FAIL",
    }
    return ReportBundle(cfg, manifest, records, analysis.verdicts, analysis.summary, analysis.plots)


def load_results(results_dir):
    """Re-load a results directory and recompute its bundle offline."""
    from .config import config_from_dict

    d = Path(results_dir)
    cpath = d / CONFIG
    if not cpath.exists():
        raise FileNotFoundError(f"{cpath} not found")
    cfg = config_from_dict(json.loads(cpath.read_text(encoding="utf-8"))["config"])
    records = list(read_records(d / RECORDS).values())
    wanted = {t for t, _ in trial_plan(cfg)}
    return aggregate(cfg, [r for r in records if r["trial"] in wanted])
