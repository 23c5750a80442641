"""Writers for manifest, trial table, summary and SVG figures."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path

import numpy as np

CSV_HEADER = ["trial", "N", "seed", "block", "eig_index", "lambda", "rho", "scaled_fluct", "prop1_residual"]
FORMATS = ("csv", "json", "svg")


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def trials_csv(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in sorted(records, key=lambda r: r["trial"]):
        base = [r["trial"], r["N"], r["seed"]]
        if not r.get("rows"):
            w.writerow([_fmt(v) for v in base] + [""] * 6)
            continue
        for row in r["rows"]:
            vals = base + [row["block"], row["eig_index"], row["lambda"], row["rho"], row["scaled_fluct"], row["prop1_residual"]]
            w.writerow([_fmt(v) for v in vals])
    return buf.getvalue()


def _write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


def emit(bundle, out, formats=FORMATS):
    """Write the report files; returns the list of paths written."""
    from .runner import dumps

    out = Path(out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc}") from exc
    paths = [_write(out / "manifest.json", dumps(bundle.manifest, indent=2) + "\n")]
    if bundle.records:
        formats = FORMATS if formats is None else formats
        if "csv" in formats:
            paths.append(_write(out / "trials.csv", trials_csv(bundle.records)))
        if "json" in formats:
            doc = {"verdicts": bundle.verdicts, "summary": bundle.summary}
            paths.append(_write(out / "summary.json", dumps(doc, indent=2) + "\n"))
        if "svg" in formats:
            paths.extend(write_plots(bundle.plots, out / "plots"))
    bundle.artifacts = paths
    return paths


# ---------------------------------------------------------------------------
# figures
# ---------------------------------------------------------------------------


def _figure():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    matplotlib.rcParams["svg.hashsalt"] = "wignerlab"
    matplotlib.rcParams["svg.fonttype"] = "none"
    fig, ax = plt.subplots(figsize=(5, 3.6))
    return plt, fig, ax


def _ecdf(x):
    x = np.sort(np.asarray(x, float))
    return x, np.arange(1, len(x) + 1) / len(x)


def render(spec, path):
    plt, fig, ax = _figure()
    kind = spec["kind"]
    sample = np.asarray(spec.get("sample", []), float)
    ref = spec.get("reference")
    if kind == "hist":
        bins = 40 if len(sample) > 200 else 20
        ax.hist(sample, bins=bins, density=True, alpha=0.6, label="Monte Carlo")
        if ref is not None:
            ax.hist(np.asarray(ref, float), bins=80, density=True, histtype="step", label="limit law")
        if spec.get("density") is not None:
            grid = np.linspace(sample.min(), sample.max(), 400)
            ax.plot(grid, spec["density"](grid), label="limit density")
        if spec.get("vline") is not None:
            ax.axvline(spec["vline"], color="k", ls="--", lw=1)
        ax.legend(fontsize=7)
    elif kind == "ecdf":
        ax.step(*_ecdf(sample), where="post", label="Monte Carlo")
        ax.step(*_ecdf(ref), where="post", label="limit law")
        ax.set_ylabel("ECDF")
        ax.legend(fontsize=7)
    elif kind == "qq":
        q = np.linspace(0.01, 0.99, 99)
        a, b = np.quantile(sample, q), np.quantile(np.asarray(ref, float), q)
        ax.plot(b, a, ".", ms=3)
        lo, hi = min(a.min(), b.min()), max(a.max(), b.max())
        ax.plot([lo, hi], [lo, hi], "k--", lw=1)
        ax.set_xlabel("limit quantiles")
        ax.set_ylabel("sample quantiles")
    elif kind == "loglog":
        ax.loglog(spec["N"], spec["values"], "o-")
        ax.set_xlabel("N")
        ax.set_ylabel(spec.get("ylabel", ""))
    else:
        plt.close(fig)
        raise ValueError(f"unknown plot kind {kind!r}")
    ax.set_title(spec["name"], fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return str(path)


def write_plots(specs, outdir):
    outdir = Path(outdir)
    if not specs:
        return []
    outdir.mkdir(parents=True, exist_ok=True)
    return [render(s, outdir / f"{s['name']}.svg") for s in specs]


def summary_json(bundle):
    from .runner import dumps

    return json.loads(dumps({"verdicts": bundle.verdicts, "summary": bundle.summary}))
