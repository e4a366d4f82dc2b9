"""Render positioning-error ECDF curves from evaluation report CSVs.

Usage: plotviz-ecdf --in ecdf_a.csv [ecdf_b.csv ...] --out ecdf.png
                    [--log-x] [--xlabel ...] [--ylabel ...]

One step curve per input file; legend labels derive from the file names.
Writes the image in every extension given (or .png and .svg when --out has
none). Rendering is deterministic: fixed style, no embedded timestamps.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plotviz"   # deterministic SVG ids
import matplotlib.pyplot as plt

from .schema import SchemaError, read_ecdf

_SAVE_META = {"Date": None, "Creator": None, "Producer": None}


def label_from_path(path) -> str:
    stem = Path(path).stem
    return stem[5:] if stem.startswith("ecdf_") else stem


def output_paths(out):
    out = Path(out)
    if out.suffix:
        return [out]
    return [out.with_suffix(".png"), out.with_suffix(".svg")]


def plot_ecdf(inputs, out, log_x=False, xlabel="Positioning error [cm]",
              ylabel="ECDF") -> list:
    """Render the curves; returns the list of files written."""
    fig, ax = plt.subplots(figsize=(6.0, 4.2), dpi=150)
    for path in inputs:
        errors, cdf = read_ecdf(path)
        errors_cm = [e * 100.0 for e in errors]
        ax.step(errors_cm, cdf, where="post", label=label_from_path(path))
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0.0, 1.02)
    ax.grid(True, alpha=0.4)
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    written = []
    for target in output_paths(out):
        target.parent.mkdir(parents=True, exist_ok=True)
        fig.savefig(target, metadata=_meta_for(target))
        written.append(target)
    plt.close(fig)
    return written


def _meta_for(path) -> dict:
    # PNG rejects the SVG/PDF date keys; strip what each backend accepts
    if path.suffix == ".svg":
        return {"Date": None}
    if path.suffix == ".pdf":
        return {"CreationDate": None}
    return {}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotviz-ecdf",
        description="ECDF step plots from evaluation ecdf_*.csv files")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True)
    parser.add_argument("--out", required=True)
    parser.add_argument("--log-x", action="store_true")
    parser.add_argument("--xlabel", default="Positioning error [cm]")
    parser.add_argument("--ylabel", default="ECDF")
    args = parser.parse_args(argv)
    try:
        written = plot_ecdf(args.inputs, args.out, args.log_x,
                            args.xlabel, args.ylabel)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
