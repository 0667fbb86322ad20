"""Render experiment results to image files with matplotlib (Agg backend)."""

import numpy as np
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

__all__ = ["render", "RC_PARAMS"]

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 6.0
RC_PARAMS = {
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "font.size": 9,
    "axes.labelsize": 10,
    "legend.fontsize": 7,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def _rows_by(result, key):
    i = result.columns.index(key)
    groups = {}
    for row in result.rows:
        groups.setdefault(row[i], []).append(row)
    return groups


def _col(rows, result, name):
    i = result.columns.index(name)
    return np.array([r[i] for r in rows], dtype=float)


def _fig1(result, fig):
    ax = fig.add_subplot(111)
    for noise, rows in _rows_by(result, "noise").items():
        lo, hi = _col(rows, result, "bin_lower"), _col(rows, result, "bin_upper")
        ax.stairs(_col(rows, result, "density"), np.append(lo, hi[-1]), label=noise)
    ax.set_xlabel(r"$\tilde f - \bar f$")
    ax.set_ylabel("density")
    ax.legend()


def _fig2(result, fig):
    ax = fig.add_subplot(111)
    a = np.array(result.column("alpha"), dtype=float)
    for name in result.columns:
        if name.startswith("radius_") and name != "radius_iid_asymptotic":
            ax.plot(a, result.column(name), label=name.replace("radius_", "T = ").replace("_", " "))
    half = (np.array(result.column("iid_exact_upper")) - np.array(result.column("iid_exact_lower"))) / 2
    ax.plot(a, half, "k--", label="iid exact (half width)")
    ax.plot(a, result.column("radius_iid_asymptotic"), "k:", label="iid asymptotic")
    ax.set_yscale("log")
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel("radius")
    ax.legend()


def _fig3(result, fig):
    ax = fig.add_subplot(111)
    for n, rows in _rows_by(result, "N").items():
        ax.plot(_col(rows, result, "qber_unsampled"), _col(rows, result, "density"), label=f"N = {n:g}")
    ax.set_xlabel("unsampled QBER")
    ax.set_ylabel("density")
    ax.set_xlim(0, 0.3)
    ax.legend()


def _fig4(result, fig):
    ax = fig.add_subplot(111)
    key = [result.columns.index(c) for c in ("N", "alpha", "qber")]
    groups = {}
    for row in result.rows:
        groups.setdefault(tuple(row[i] for i in key), []).append(row)
    for (n, a, q), rows in groups.items():
        ax.plot(
            _col(rows, result, "M_over_N"),
            _col(rows, result, "normalized_radius"),
            marker="o",
            label=f"N={n:g}, a={a:g}, e={q:g}",
        )
    ax.axvline(0.5, color="k", lw=0.6)
    ax.set_xlabel("M / N")
    ax.set_ylabel("normalized radius")
    ax.legend(ncol=2)


def _fig5(result, fig):
    ax = fig.add_subplot(111)
    m = np.array(result.column("M"), dtype=float)
    for prefix, style in (("iid", "b-"), ("general", "r-")):
        ax.plot(m, result.column(f"{prefix}_lower"), style, label=prefix)
        ax.plot(m, result.column(f"{prefix}_upper"), style)
    for name in result.columns:
        if name.startswith("exa_") and name.endswith("_lower"):
            tag = name[4:-6]
            ax.fill_between(
                m, result.column(name), result.column(f"exa_{tag}_upper"), alpha=0.3, label=f"exact d={tag}"
            )
    ax.set_xlabel("M")
    ax.set_ylabel("fidelity")
    ax.legend()


def _coverage(xname, xlabel):
    def draw(result, fig):
        ax = fig.add_subplot(111)
        x = np.array(result.column(xname), dtype=float)
        se = np.array(result.column("mc_stderr"), dtype=float)
        for name, label in (("coverage_general", "general"), ("coverage_iid", "iid exact")):
            ax.errorbar(x, result.column(name), yerr=3 * se, marker="o", capsize=2, label=label)
        if xname == "alpha":
            ax.plot(x, x, "k--", lw=0.8, label="nominal")
        else:
            ax.axhline(result.parameters["alpha"], color="k", ls="--", lw=0.8, label="nominal")
        ax.set_xlabel(xlabel)
        ax.set_ylabel("coverage")
        ax.legend()

    return draw


def _fig7(result, fig):
    groups = {}
    for row in result.rows:
        groups.setdefault((row[0], row[1]), []).append(row)
    cols = 2
    nrows = int(np.ceil(len(groups) / cols))
    for k, ((n, m), rows) in enumerate(groups.items(), start=1):
        ax = fig.add_subplot(nrows, cols, k)
        q = np.unique(_col(rows, result, "qber"))
        a = np.unique(_col(rows, result, "alpha"))
        shape = (q.size, a.size)
        exact = _col(rows, result, "T_exact").reshape(shape)
        star = _col(rows, result, "T_star").reshape(shape)
        levels = np.arange(1, max(exact.max(), star.max()) + 2, 2)
        ax.contour(q, a, exact.T, levels=levels, colors="b", linewidths=0.8)
        ax.contour(q, a, star.T, levels=levels, colors="r", linestyles="--", linewidths=0.8)
        ax.set_title(f"N={n:g}, M={m:g}", fontsize=8)
        ax.set_xlabel("QBER")
        ax.set_ylabel(r"$\alpha$")
    fig.tight_layout()


def _table2(result, fig):
    ax = fig.add_subplot(111)
    ax.step(result.column("alpha"), result.column("T_star"), where="mid", marker="o")
    ax.set_xlabel(r"$\alpha$")
    ax.set_ylabel("T*")


_RENDERERS = {
    "fig1": _fig1,
    "fig2": _fig2,
    "fig3": _fig3,
    "fig4": _fig4,
    "fig5": _fig5,
    "fig6a": _coverage("M", "M"),
    "fig6b": _coverage("d", "d"),
    "fig6c": _coverage("alpha", r"$\alpha$"),
    "fig7": _fig7,
    "table2": _table2,
}


def render(result, path):
    """Draw ``result`` and save it to ``path`` (format from the suffix)."""
    with plt.rc_context(RC_PARAMS):
        fig = plt.figure(figsize=[8.0, 8.0] if result.experiment == "fig7" else None)
        try:
            _RENDERERS[result.experiment](result, fig)
            fig.savefig(path)
        finally:
            plt.close(fig)
    return path
