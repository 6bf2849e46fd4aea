"""Convergence figures from run traces.

Modes: ``dual-gap`` plots |g(lambda_k) - g_star| per trace (semilog by
default), ``primal-gap`` plots |f0 at the averaged primal point - g_star|,
and ``grad-error`` renders a resample profile as a mean line with a shaded
min/max band.
"""

import argparse
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .io import TraceFormatError, read_error_profile, read_sidecar, read_trace
from .style import new_figure, save

MODES = ("dual-gap", "primal-gap", "grad-error")
_FLOOR = 1e-16  # keeps exact zeros drawable on a log axis


@dataclass
class FigureSpec:
    traces: list
    out: str
    mode: str = "dual-gap"
    log_y: bool = True
    labels: list = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise TraceFormatError(f"unknown mode {self.mode!r}; "
                                   f"expected one of {MODES}")
        if not self.traces:
            raise TraceFormatError("no trace files given")
        if self.labels and len(self.labels) != len(self.traces):
            raise TraceFormatError("need one label per trace")


def plot_convergence(spec):
    """Render the figure described by ``spec``; returns the output path."""
    fig, ax = new_figure()
    if spec.mode == "grad-error":
        for i, path in enumerate(spec.traces):
            ks, err = read_error_profile(path)
            label = spec.labels[i] if spec.labels else Path(path).stem
            mean = err.mean(axis=1)
            ax.plot(ks, np.maximum(mean, _FLOOR), label=f"{label} (mean)")
            ax.fill_between(ks, np.maximum(err.min(axis=1), _FLOOR),
                            np.maximum(err.max(axis=1), _FLOOR), alpha=0.25)
        ax.set_ylabel("squared gradient error")
    else:
        column = "g_val" if spec.mode == "dual-gap" else "primal_val"
        for i, path in enumerate(spec.traces):
            trace = read_trace(path)
            g_star = read_sidecar(path)["g_star"]
            gap = np.abs(trace[column] - g_star)
            label = spec.labels[i] if spec.labels else Path(path).stem
            ax.plot(trace["k"], np.maximum(gap, _FLOOR), label=label)
        ax.set_ylabel("|dual value - reference|" if spec.mode == "dual-gap"
                      else "|primal value - reference|")
    if spec.log_y:
        ax.set_yscale("log")
    ax.set_xlabel("iteration")
    ax.legend(loc="upper right")
    save(fig, spec.out)
    return spec.out


def main(argv=None):
    parser = argparse.ArgumentParser(
        description="Semilog convergence curves from run traces")
    parser.add_argument("--trace", action="append", required=True,
                        help="trace CSV (repeatable)")
    parser.add_argument("--out", required=True, help="output image (.svg/.png)")
    parser.add_argument("--mode", default="dual-gap", choices=MODES)
    parser.add_argument("--label", action="append", default=[])
    parser.add_argument("--linear-y", action="store_true")
    args = parser.parse_args(argv)
    try:
        spec = FigureSpec(traces=args.trace, out=args.out, mode=args.mode,
                          log_y=not args.linear_y, labels=args.label)
        plot_convergence(spec)
    except TraceFormatError as exc:
        parser.exit(1, f"error: {exc}\n")
    return 0


if __name__ == "__main__":
    main()
