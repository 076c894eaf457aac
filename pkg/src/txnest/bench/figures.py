"""Figure rendering for benchmark results: mean throughput and abort rate
per policy, written as PNG files next to the CSV they summarize."""

from __future__ import annotations

import statistics
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_STYLE = {
    "figure.figsize": (5.0, 3.4),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.titlesize": 11,
    "axes.labelsize": 10,
    "legend.fontsize": 9,
}


def _group(rows, metric):
    groups = {}
    for row in rows:
        key = (row["bench"], row["policy"])
        groups.setdefault(key, []).append(float(row[metric]))
    return groups


def _bar(ax, groups, ylabel):
    labels = ["%s/%s" % key for key in groups]
    means = [statistics.fmean(vals) for vals in groups.values()]
    spreads = [
        (mean - min(vals), max(vals) - mean)
        for mean, vals in zip(means, groups.values())
    ]
    err = list(zip(*[(lo, hi) for lo, hi in spreads])) if spreads else None
    ax.bar(range(len(labels)), means, yerr=err, capsize=3, color="#4878a8")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20, ha="right")
    ax.set_ylabel(ylabel)


def render_figures(rows: list[dict], stem) -> list[Path]:
    """Render throughput and abort-rate figures for CSV-shaped rows.

    ``stem`` is the path prefix; files land at ``<stem>_throughput.png``
    and ``<stem>_abort_rate.png``.
    """
    stem = Path(stem)
    out = []
    with plt.rc_context(_STYLE):
        for metric, ylabel, suffix in (
            ("throughput", "committed tx / s", "throughput"),
            ("abort_rate", "abort rate", "abort_rate"),
        ):
            groups = _group(rows, metric)
            fig, ax = plt.subplots()
            _bar(ax, groups, ylabel)
            ax.set_title("%s by policy (mean over reps, min-max range)" % ylabel)
            fig.tight_layout()
            path = stem.parent / ("%s_%s.png" % (stem.name, suffix))
            fig.savefig(path, dpi=130)
            plt.close(fig)
            out.append(path)
    return out


def render_from_csv(csv_path, out_dir=None) -> list[Path]:
    from .stats import read_csv

    csv_path = Path(csv_path)
    rows = read_csv(csv_path)
    if not rows:
        raise ValueError("no data rows in %s" % csv_path)
    base = Path(out_dir) if out_dir is not None else csv_path.parent
    return render_figures(rows, base / csv_path.stem)


def stats_rows(stats) -> list[dict]:
    """RunStats objects as CSV-shaped dicts for render_figures."""
    return [
        {
            "bench": s.bench,
            "policy": s.policy,
            "threads": s.threads,
            "reps": s.rep,
            "throughput": s.throughput,
            "abort_rate": s.abort_rate,
            "parent_aborts": s.parent_aborts,
            "child_aborts": s.child_aborts,
            "child_retries": s.child_retries,
            "wall_ms": s.wall_ms,
        }
        for s in stats
    ]
