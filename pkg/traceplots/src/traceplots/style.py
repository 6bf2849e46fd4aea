"""Deterministic figure defaults: fixed geometry, salted SVG ids, no
timestamps in the output."""

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

FIGSIZE = (6.4, 4.2)
DPI = 120

matplotlib.rcParams.update({
    "svg.hashsalt": "traceplots",
    "figure.figsize": FIGSIZE,
    "figure.dpi": DPI,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "legend.fontsize": 9,
    "font.size": 10,
})


def new_figure():
    return plt.subplots(figsize=FIGSIZE, dpi=DPI)


def save(fig, out_path):
    """Write the figure; SVG output omits the creation date so repeated
    renders are byte-identical."""
    out_path = str(out_path)
    if out_path.endswith(".svg"):
        fig.savefig(out_path, format="svg", metadata={"Date": None})
    else:
        fig.savefig(out_path)
    plt.close(fig)
