"""Figure rendering for the command-line report paths.

Kept separate from the harness so that library users never import
matplotlib; the CLI calls these after the delimited output is written.
All functions render to a file with the Agg backend.
"""

from __future__ import annotations

import numpy as np

__all__ = ["render_mismatch_figure", "render_unobserved_figure"]


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _standard_normal(ax):
    x = np.linspace(-6.0, 6.0, 241)
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    ax.plot(x, pdf, color="tab:red", linewidth=1.2)


def render_mismatch_figure(hists: dict, path, title: str | None = None) -> None:
    """Grid of whitened-mismatch histograms with a standard normal overlay.

    ``hists`` is keyed by (method, kind) as produced by the harness histogram
    helpers; rows are methods in first-seen order, columns the data and model
    mismatch.  Each panel shows the binned density with the N(0, 1) density
    for reference.
    """
    methods = []
    for method, _kind in hists:
        if method not in methods:
            methods.append(method)
    if not methods:
        raise ValueError("no histograms to render")
    plt = _pyplot()
    kinds = ("data", "model")
    fig, axes = plt.subplots(len(methods), 2,
                             figsize=(9.0, 2.6 * len(methods)),
                             squeeze=False)
    for i, method in enumerate(methods):
        for j, kind in enumerate(kinds):
            ax = axes[i][j]
            h = hists.get((method, kind))
            if h is None:
                ax.set_axis_off()
                continue
            centers = 0.5 * (h.edges[:-1] + h.edges[1:])
            width = h.edges[1] - h.edges[0]
            ax.bar(centers, h.density, width=width, color="tab:blue",
                   edgecolor="none")
            _standard_normal(ax)
            ax.set_title(f"{method}: {kind} mismatch", fontsize=9)
            ax.set_xlim(h.edges[0], h.edges[-1])
    for ax in axes[-1]:
        ax.set_xlabel("whitened residual")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


_LONGRUN_COLORS = {"truth": "0.6", "shadow": "tab:blue"}


def _longrun_color(name: str) -> str:
    if name in _LONGRUN_COLORS:
        return _LONGRUN_COLORS[name]
    if name.startswith("w4dvar"):
        return "tab:red"
    return "tab:green"


def render_unobserved_figure(result, path) -> None:
    """Pooled unobserved-value histograms of a long-run study.

    One density line per method (truth in gray) plus a black vertical line at
    the completion level the analyses start from.
    """
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(7.0, 4.2))
    for name, h in result.histograms.items():
        centers = 0.5 * (h.edges[:-1] + h.edges[1:])
        ax.plot(centers, h.density, label=name, color=_longrun_color(name),
                drawstyle="steps-mid",
                linewidth=1.0 if name == "truth" else 1.4)
    ax.axvline(result.baseline_level, color="black", linewidth=1.2,
               label="initial guess")
    ax.set_xlabel("unobserved component value")
    ax.set_ylabel("density")
    ax.set_title(f"unobserved components over {result.n_steps} steps")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
