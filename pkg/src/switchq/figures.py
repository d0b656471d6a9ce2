# Figure rendering for the report path: bound curves against empirical
# estimates, and trajectory metric summaries. Output bytes are deterministic
# for a fixed environment (metadata stripped, fixed geometry).
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

_SAVE_KW = dict(dpi=120, metadata={"Software": None})
_CURVE_STYLE = {
    "theorem1": dict(color="tab:blue", ls="--"),
    "theorem2": dict(color="tab:red", ls="-"),
    "corollary_a": dict(color="tab:orange", ls="-."),
    "corollary_b": dict(color="tab:green", ls=":"),
    "abstract": dict(color="tab:purple", ls=":", alpha=0.7),
}


def _plot_axis(ax, ks):
    ax.set_xlabel("iteration k")
    ax.set_yscale("log")
    if max(ks) > 0:
        ax.set_xscale("symlog", linthresh=1)
    ax.grid(True, which="both", alpha=0.3)


def save_bounds_figure(path: str | Path, curve_rows: list[dict], metric_blocks=None) -> None:
    """Bound curves vs k, with empirical mean +/- 3*SE overlaid when given."""
    ks = [row["k"] for row in curve_rows]
    fig, (ax_inf, ax_l2) = plt.subplots(1, 2, figsize=(10, 4))

    for label in ("theorem2", "corollary_a", "corollary_b", "abstract"):
        ax_inf.plot(ks, [row[label] for row in curve_rows], label=label, **_CURVE_STYLE[label])
    ax_l2.plot(ks, [row["theorem1"] for row in curve_rows], label="theorem1",
               **_CURVE_STYLE["theorem1"])

    if metric_blocks:
        by_metric = {block["metric"]: block["rows"] for block in metric_blocks}
        for metric, ax in (("err_inf", ax_inf), ("err_lower_l2", ax_l2)):
            rows = by_metric.get(metric)
            if rows:
                mk = [r["k"] for r in rows]
                mean = [r["mean"] for r in rows]
                err = [3.0 * r["std_error"] for r in rows]
                ax.errorbar(mk, mean, yerr=err, fmt="ko", ms=3, lw=1, capsize=2,
                            label=f"empirical {metric}")

    ax_inf.set_title("sup-norm error of the final iterate")
    ax_inf.set_ylabel("E||Q_k - Q*||_inf")
    ax_l2.set_title("L2 error of the lower comparison system")
    ax_l2.set_ylabel("E||Q_k^L - Q*||_2")
    for ax in (ax_inf, ax_l2):
        _plot_axis(ax, ks)
        ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)


def save_trajectory_figure(path: str | Path, result) -> None:
    """Mean of each trajectory metric over trials at the checkpoints."""
    ks = result.checkpoints
    fig, ax = plt.subplots(figsize=(6, 4))
    for name, values in result.metrics.items():
        ax.plot(ks, values.mean(axis=1), marker="o", ms=3, label=name)
    _plot_axis(ax, ks)
    ax.set_ylabel("trial mean")
    ax.set_title(f"{result.n_trials} trials, horizon {result.horizon}")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KW)
    plt.close(fig)
