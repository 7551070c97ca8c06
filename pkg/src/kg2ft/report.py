"""Human-readable rendering of stats and score reports, plus figures.

Figures are written as PNG files next to the delimited output; rendering
uses the Agg backend so no display is ever required.
"""

from pathlib import Path

from .evalharness import ScoreReport


def _fmt(value: float) -> str:
    return f"{value:.4f}"


def format_report(report: ScoreReport | dict) -> str:
    if isinstance(report, dict):
        report = ScoreReport.from_dict(report)
    lines = [
        f"score report  metric={report.metric}  task={report.task}  "
        f"format={report.eval_format}  n={report.n}"
    ]
    for key in sorted(report.summary):
        lines.append(f"  {key}: {_fmt(report.summary[key])}")
    if report.per_sample:
        key = "f1" if "f1" in report.per_sample[0] else "score"
        values = [entry[key] for entry in report.per_sample]
        perfect = sum(1 for v in values if v == 1.0)
        zero = sum(1 for v in values if v == 0.0)
        lines.append(f"  per-sample {key}: {perfect} at 1.0, {zero} at 0.0, "
                     f"{report.n - perfect - zero} in between")
    return "\n".join(lines)


def format_stats(stats: dict) -> str:
    lines = ["dataset stats"]
    for name in sorted(stats.get("counts", {})):
        lines.append(f"  {name}: {stats['counts'][name]} records")
    by_task = stats.get("by_task_format", {})
    if by_task:
        lines.append("  by task/format: " + ", ".join(f"{k}={v}" for k, v in sorted(by_task.items())))
    percentiles = stats.get("token_percentiles") or {}
    if percentiles:
        lines.append(
            "  token estimate: min={min} p50={p50} p95={p95} p100={p100} mean={mean}".format(**percentiles)
        )
    budget = stats.get("token_budget")
    if budget is not None:
        lines.append(f"  token budget: {budget}")
    lines.append(f"  oversized: {stats.get('oversized', 0)}  fallback: {stats.get('fallback', 0)}")
    return "\n".join(lines)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    return plt


def figure_path(report_path: str | Path) -> Path:
    return Path(report_path).with_suffix(".png")


def render_stats_figure(stats: dict, out_path: str | Path) -> Path:
    """Token-estimate histogram for a built dataset."""
    plt = _pyplot()
    histogram = stats.get("token_histogram") or {}
    bins = histogram.get("bins") or []
    counts = histogram.get("counts") or []
    fig, ax = plt.subplots(figsize=(7, 4))
    if bins and counts:
        ax.bar(bins, counts, width=histogram.get("bin_width", 1) * 0.9, align="edge")
    budget = stats.get("token_budget")
    if budget is not None:
        ax.axvline(budget, linestyle="--", linewidth=1, label=f"budget {budget}")
        ax.legend()
    ax.set_xlabel("estimated tokens per training sample")
    ax.set_ylabel("samples")
    ax.set_title("token estimate distribution")
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out


def render_score_figure(report: ScoreReport | dict, out_path: str | Path) -> Path:
    """Per-sample score distribution for a score report."""
    if isinstance(report, dict):
        report = ScoreReport.from_dict(report)
    plt = _pyplot()
    key = "f1" if report.per_sample and "f1" in report.per_sample[0] else "score"
    values = [entry[key] for entry in report.per_sample]
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.hist(values, bins=20, range=(0.0, 1.0))
    mean = sum(values) / len(values) if values else 0.0
    ax.axvline(mean, linestyle="--", linewidth=1, label=f"mean {mean:.3f}")
    ax.legend()
    ax.set_xlabel(key)
    ax.set_ylabel("samples")
    ax.set_title(f"{report.metric} on {report.task}/{report.eval_format} (n={report.n})")
    fig.tight_layout()
    out = Path(out_path)
    fig.savefig(out, dpi=100)
    plt.close(fig)
    return out
