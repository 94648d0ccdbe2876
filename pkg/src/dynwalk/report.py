"""Result emission: delimited output plus rendered figures.

Every experiment writes <prefix>.csv and a JSON mirror <prefix>.json with
the same columns and rows, and (unless plotting is disabled) a matplotlib
figure <prefix>.png next to them.  Values are written through ``repr`` so
reruns with the same seed produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math
import os


def _plain(v):
    """Coerce numpy scalars/bools to plain Python for stable serialization."""
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def write_csv(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_plain(v) for v in row])


def write_json(path, header, rows) -> None:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    payload = {"columns": list(header),
               "rows": [[_plain(v) for v in row] for row in rows]}
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=1)
        fh.write("\n")


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _column(header, rows, name):
    i = list(header).index(name)
    return [row[i] for row in rows]


def _float_column(header, rows, name):
    """Column as floats with nonfinite values mapped to nan (plot-safe)."""
    out = []
    for v in _column(header, rows, name):
        try:
            x = float(v)
        except (TypeError, ValueError):
            x = math.nan
        out.append(x if math.isfinite(x) else math.nan)
    return out


def render_figure(kind, header, rows, path, title="") -> None:
    """Render one figure for the result table; kind selects the layout.

    kinds: "estimates" (mean with 95% CI per row), "probe" (relaxation time
    against probe time with the 8192 threshold), "spectra" (per-step
    spectral quantities), "checks" (violation vs tolerance per check).
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    if kind == "estimates":
        labels = [str(v) for v in _column(header, rows, "experiment_id")]
        means = [float(v) for v in _column(header, rows, "mean")]
        los = [float(v) for v in _column(header, rows, "ci_lo")]
        his = [float(v) for v in _column(header, rows, "ci_hi")]
        x = range(len(rows))
        err = [[m - lo for m, lo in zip(means, los)],
               [hi - m for m, hi in zip(means, his)]]
        ax.errorbar(x, means, yerr=err, fmt="o", capsize=4)
        ax.set_xticks(list(x))
        ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
        ax.set_ylabel("mean (95% CI)")
    elif kind == "probe":
        ts = _float_column(header, rows, "t")
        rels = _float_column(header, rows, "t_rel")
        ax.plot(ts, rels, "o-", ms=3)
        ax.axhline(8192, color="crimson", ls="--", label="threshold 8192")
        ax.set_xlabel("probe time t")
        ax.set_ylabel("relaxation time of snapshot")
        ax.set_yscale("log")
        ax.legend()
    elif kind == "spectra":
        ts = _float_column(header, rows, "t")
        for col in ("lambda_star", "t_rel", "t_hit"):
            ax.plot(ts, _float_column(header, rows, col), "o-", ms=3, label=col)
        ax.set_xlabel("step t")
        ax.set_yscale("log")
        ax.legend()
    elif kind == "duality":
        js = [int(v) for v in _column(header, rows, "j")]
        diffs = [max(float(v), 1e-18) for v in _column(header, rows, "abs_diff")]
        ax.bar(js, diffs, color="steelblue", width=0.5)
        ax.axhline(1e-12, color="crimson", ls="--", label="tolerance 1e-12")
        ax.set_xlabel("rounds j")
        ax.set_ylabel("|consensus - coalescence| probability gap")
        ax.set_yscale("log")
        ax.legend()
    elif kind == "checks":
        names = [str(v) for v in _column(header, rows, "check")]
        viol = [max(float(v), 1e-18) for v in _column(header, rows, "max_violation")]
        tol = [float(v) for v in _column(header, rows, "tolerance")]
        x = range(len(rows))
        ax.bar(x, viol, color="steelblue")
        ax.plot(list(x), tol, "r--", label="tolerance")
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=40, ha="right", fontsize=7)
        ax.set_yscale("log")
        ax.set_ylabel("worst violation")
        ax.legend()
    else:
        plt.close(fig)
        raise ValueError(f"unknown figure kind {kind!r}")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": "dynwalk"})
    plt.close(fig)


def emit(prefix, header, rows, plot_kind=None, title="") -> list:
    """Write CSV + JSON (+ figure) under the common path prefix."""
    paths = [f"{prefix}.csv", f"{prefix}.json"]
    write_csv(paths[0], header, rows)
    write_json(paths[1], header, rows)
    if plot_kind is not None and rows:
        png = f"{prefix}.png"
        render_figure(plot_kind, header, rows, png, title)
        paths.append(png)
    return paths
