"""Bar chart of bits-to-accuracy per run from a summary table.

Runs that never reached the accuracy target (k_star reported as ">K") are
drawn hatched with an annotation; their bits column is the total spent.
"""

import argparse

import numpy as np

from .io import TraceFormatError, read_summary
from .style import new_figure, save


def plot_bits(summary_path, out_path):
    rows = read_summary(summary_path)
    names = [r["run"] for r in rows]
    bits = []
    censored = []
    for r in rows:
        try:
            bits.append(int(float(r["bits"])))
        except ValueError:
            raise TraceFormatError(
                f"malformed bits value {r['bits']!r} for run {r['run']}")
        censored.append(str(r["k_star"]).startswith(">"))

    fig, ax = new_figure()
    x = np.arange(len(names))
    for i in range(len(names)):
        ax.bar(x[i], bits[i], width=0.7, color=f"C{i % 10}",
               hatch="//" if censored[i] else None,
               edgecolor="black", linewidth=0.6)
        if censored[i]:
            ax.annotate("never reached", (x[i], bits[i]),
                        ha="center", va="bottom", fontsize=8)
    ax.set_xticks(x)
    ax.set_xticklabels(names, rotation=30, ha="right")
    ax.set_ylabel("bits to target accuracy")
    save(fig, out_path)
    return out_path


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Grouped bits-to-accuracy bars from a summary CSV")
    parser.add_argument("--summary", required=True)
    parser.add_argument("--out", required=True)
    args = parser.parse_args(argv)
    try:
        plot_bits(args.summary, args.out)
    except TraceFormatError as exc:
        parser.exit(1, f"error: {exc}\n")
    return 0


if __name__ == "__main__":
    main()
