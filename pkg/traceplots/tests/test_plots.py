import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from traceplots import FigureSpec, plot_bits, plot_convergence
from traceplots.io import TraceFormatError, read_summary, read_trace

GOLDEN_CONFIG = {
    "problem": {"kind": "synth_quadratic", "m": 4, "n": 10, "a": 1.0,
                "optimum": "interior"},
    "seeds": [0],
    "bits_per_real": 64,
    "algorithms": [
        {"name": "sd", "variant": "standard", "init": "sphere",
         "rule": {"kind": "step_decay", "gamma0": 20, "q": 0.5,
                  "stage_length": 60}, "K": 800, "eps": 1e-12},
        {"name": "ray-sd", "variant": "fgor", "gamma_const": 20,
         "rule": {"kind": "step_decay", "gamma0": 20, "q": 0.5,
                  "stage_length": 60}, "K": 800, "eps": 1e-12},
    ],
}


@pytest.fixture(scope="session")
def golden(tmp_path_factory):
    """Golden traces from the solver CLI: the m=4, n=10 interior regime."""
    root = tmp_path_factory.mktemp("golden")
    config = root / "config.json"
    config.write_text(json.dumps(GOLDEN_CONFIG))
    out = root / "out"
    proc = subprocess.run(
        [sys.executable, "-m", "dualray.cli", "run", "--config", str(config),
         "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return out


def test_golden_traces_parse(golden):
    trace = read_trace(golden / "ray-sd-s0.csv")
    assert trace["k"][0] == 1
    assert trace["bits_cum"][-1] > 0
    rows = read_summary(golden / "summary.csv")
    assert {r["run"] for r in rows} == {"sd-s0", "ray-sd-s0"}


def test_convergence_svg_byte_stable(golden, tmp_path):
    traces = [str(golden / "ray-sd-s0.csv"), str(golden / "sd-s0.csv")]
    a = tmp_path / "conv_a.svg"
    b = tmp_path / "conv_b.svg"
    plot_convergence(FigureSpec(traces=traces, out=str(a)))
    plot_convergence(FigureSpec(traces=traces, out=str(b)))
    assert a.read_bytes() == b.read_bytes()
    assert a.stat().st_size > 1000


def test_convergence_png_output(golden, tmp_path):
    out = tmp_path / "conv.png"
    plot_convergence(FigureSpec(traces=[str(golden / "sd-s0.csv")],
                                out=str(out), mode="primal-gap"))
    assert out.exists() and out.stat().st_size > 1000


def test_bits_svg_byte_stable(golden, tmp_path):
    a = tmp_path / "bits_a.svg"
    b = tmp_path / "bits_b.svg"
    plot_bits(golden / "summary.csv", str(a))
    plot_bits(golden / "summary.csv", str(b))
    assert a.read_bytes() == b.read_bytes()


def test_bits_censored_run_annotated(tmp_path):
    summary = tmp_path / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "k_star", "k0", "bits", "final_gap"])
        w.writerow(["fast", "12", "4", "5000", "1e-6"])
        w.writerow(["stuck", ">50", "0", "672000", "0.2"])
    out = tmp_path / "bits.svg"
    plot_bits(summary, str(out))
    assert "never reached" in out.read_text()


def test_single_run_single_bar(tmp_path):
    summary = tmp_path / "summary.csv"
    with open(summary, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["run", "k_star", "k0", "bits", "final_gap"])
        w.writerow(["only", "3", "1", "999", "1e-8"])
    out = tmp_path / "one.svg"
    plot_bits(summary, str(out))
    assert out.exists()


def test_grad_error_band_mode(tmp_path):
    profile = tmp_path / "errprofile.csv"
    import numpy as np
    rng = np.random.default_rng(0)
    with open(profile, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k"] + [f"err_sq_{i + 1:03d}" for i in range(100)])
        for k in range(1, 31):
            base = 0.0 if k <= 10 else 0.1 / k
            w.writerow([k] + [repr(base * (1 + 0.3 * rng.random()))
                              for _ in range(100)])
    a = tmp_path / "band_a.svg"
    b = tmp_path / "band_b.svg"
    spec = FigureSpec(traces=[str(profile)], out=str(a), mode="grad-error")
    plot_convergence(spec)
    plot_convergence(FigureSpec(traces=[str(profile)], out=str(b),
                                mode="grad-error"))
    assert a.read_bytes() == b.read_bytes()


class TestValidation:
    def test_empty_trace_list(self, tmp_path):
        with pytest.raises(TraceFormatError):
            FigureSpec(traces=[], out=str(tmp_path / "x.svg"))

    def test_missing_trace_named(self, tmp_path):
        spec = FigureSpec(traces=[str(tmp_path / "ghost.csv")],
                          out=str(tmp_path / "x.svg"))
        with pytest.raises(TraceFormatError, match="ghost"):
            plot_convergence(spec)

    def test_missing_sidecar_named(self, golden, tmp_path):
        orphan = tmp_path / "orphan.csv"
        orphan.write_bytes((golden / "sd-s0.csv").read_bytes())
        spec = FigureSpec(traces=[str(orphan)], out=str(tmp_path / "x.svg"))
        with pytest.raises(TraceFormatError, match="orphan"):
            plot_convergence(spec)

    def test_malformed_summary(self, tmp_path):
        bad = tmp_path / "summary.csv"
        bad.write_text("nope,columns\n1,2\n")
        with pytest.raises(TraceFormatError):
            plot_bits(bad, str(tmp_path / "x.svg"))

    def test_unknown_mode(self, tmp_path):
        with pytest.raises(TraceFormatError):
            FigureSpec(traces=["t.csv"], out="x.svg", mode="wat")

    def test_label_count_mismatch(self):
        with pytest.raises(TraceFormatError):
            FigureSpec(traces=["a.csv", "b.csv"], out="x.svg",
                       labels=["only-one"])


def test_cli_entry_points(golden, tmp_path):
    out = tmp_path / "cli.svg"
    rc = subprocess.run(
        [sys.executable, "-m", "traceplots.convergence",
         "--trace", str(golden / "sd-s0.csv"), "--out", str(out)],
        capture_output=True, text=True)
    assert rc.returncode == 0, rc.stderr
    assert out.exists()
    out2 = tmp_path / "cli_bits.svg"
    rc = subprocess.run(
        [sys.executable, "-m", "traceplots.bits",
         "--summary", str(golden / "summary.csv"), "--out", str(out2)],
        capture_output=True, text=True)
    assert rc.returncode == 0, rc.stderr
    assert out2.exists()
