"""Render the evaluation result tables: grouped bars for accuracy and p95
error, a pass-ratio grid, and markdown mirrors of each table.

Usage: plotviz-tables --in table1.csv table2.csv table3.csv --out <dir>

Inputs may be given in any order; each file is dispatched by its header.
Markdown tables mirror the row/column structure (failure probability or
test set rows, transmit power columns) at two decimals.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "plotviz"   # deterministic SVG ids
import matplotlib.pyplot as plt

from .schema import (SchemaError, TABLE1_COLUMNS, TABLE2_COLUMNS,
                     TABLE3_COLUMNS, read_csv, read_table1, read_table2,
                     read_table3)

_META = {".svg": {"Date": None}}


def _powers(rows):
    return sorted({r["P_T_dBm"] for r in rows})


def _save(fig, stem: Path) -> list:
    written = []
    for ext in (".png", ".svg"):
        target = stem.with_suffix(ext)
        fig.savefig(target, metadata=_META.get(ext, {}))
        written.append(target)
    plt.close(fig)
    return written


def _grouped_bars(ax, groups, powers, values, ylabel):
    width = 0.8 / len(powers)
    for i, p in enumerate(powers):
        xs = [g + i * width for g in range(len(groups))]
        ax.bar(xs, [values[(g, p)] for g in groups], width,
               label=f"{p:g} dBm")
    ax.set_xticks([g + 0.4 - width / 2 for g in range(len(groups))])
    ax.set_xticklabels([str(g) for g in groups], fontsize=8)
    ax.set_ylabel(ylabel)
    ax.legend(fontsize=8)
    ax.grid(True, axis="y", alpha=0.4)


def _markdown(rows_labels, powers, values, corner, fmt="{:.2f}") -> str:
    lines = ["| " + corner + " | " +
             " | ".join(f"{p:g} dBm" for p in powers) + " |",
             "|" + " --- |" * (len(powers) + 1)]
    for label in rows_labels:
        cells = [fmt.format(values[(label, p)]) for p in powers]
        lines.append("| " + str(label) + " | " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def render_table1(path, out_dir: Path) -> list:
    rows = read_table1(path)
    powers = _powers(rows)
    pfs = sorted({r["p_f"] for r in rows})
    values = {(r["p_f"], r["P_T_dBm"]): r["accuracy_pct"] for r in rows}
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    _grouped_bars(ax, pfs, powers, values, "Exact-vector accuracy [%]")
    ax.set_xlabel("Failure probability")
    fig.tight_layout()
    written = _save(fig, out_dir / "table1")
    md = _markdown(pfs, powers, values, "p_f \\ power")
    (out_dir / "table1.md").write_text(md)
    return written + [out_dir / "table1.md"]


def render_table2(path, out_dir: Path) -> list:
    rows = read_table2(path)
    powers = _powers(rows)
    keys = sorted({(r["approach"], r["p_f"]) for r in rows})
    values = {((r["approach"], r["p_f"]), r["P_T_dBm"]): r["p95_cm"]
              for r in rows}
    fig, ax = plt.subplots(figsize=(6.0, 4.0), dpi=150)
    _grouped_bars(ax, keys, powers, values, "95th percentile error [cm]")
    ax.set_xlabel("Approach, failure probability")
    fig.tight_layout()
    written = _save(fig, out_dir / "table2")
    labels = [f"{a}, p_f={pf:g}" for a, pf in keys]
    lv = {(lab, p): values[(key, p)]
          for lab, key in zip(labels, keys) for p in powers}
    md = _markdown(labels, powers, lv, "approach \\ power")
    (out_dir / "table2.md").write_text(md)
    return written + [out_dir / "table2.md"]


def render_table3(path, out_dir: Path) -> list:
    rows = read_table3(path)
    powers = _powers(rows)
    testsets = list(dict.fromkeys(r["testset"] for r in rows))
    pfs = sorted({r["p_f_train"] for r in rows})
    fig, ax = plt.subplots(figsize=(6.5, 4.2), dpi=150)
    grid = []
    row_labels = []
    for ts in testsets:
        for pf in pfs:
            vals = [next(r["pass_pct"] for r in rows
                         if r["testset"] == ts and r["p_f_train"] == pf
                         and r["P_T_dBm"] == p) for p in powers]
            grid.append(vals)
            row_labels.append(f"{ts}, pf={pf:g}")
    im = ax.imshow(grid, aspect="auto", cmap="viridis", vmin=0, vmax=100)
    ax.set_xticks(range(len(powers)))
    ax.set_xticklabels([f"{p:g} dBm" for p in powers])
    ax.set_yticks(range(len(row_labels)))
    ax.set_yticklabels(row_labels, fontsize=7)
    for i, vals in enumerate(grid):
        for j, v in enumerate(vals):
            ax.text(j, i, f"{v:.2f}", ha="center", va="center",
                    fontsize=7, color="white" if v < 60 else "black")
    ax.set_title("Threshold-test pass ratio [%]")
    fig.colorbar(im, ax=ax)
    fig.tight_layout()
    written = _save(fig, out_dir / "table3")
    md_lines = []
    for ts in testsets:
        md_lines.append(f"**{ts}**\n")
        vals = {(pf, p): next(r["pass_pct"] for r in rows
                              if r["testset"] == ts and r["p_f_train"] == pf
                              and r["P_T_dBm"] == p)
                for pf in pfs for p in powers}
        md_lines.append(_markdown(pfs, powers, vals, "p_f train \\ power"))
    (out_dir / "table3.md").write_text("\n".join(md_lines))
    return written + [out_dir / "table3.md"]


_DISPATCH = {tuple(TABLE1_COLUMNS): render_table1,
             tuple(TABLE2_COLUMNS): render_table2,
             tuple(TABLE3_COLUMNS): render_table3}


def render_tables(inputs, out_dir) -> list:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for path in inputs:
        with open(path) as fh:
            header = tuple(fh.readline().rstrip("\n").split(","))
        if header not in _DISPATCH:
            known = [TABLE1_COLUMNS, TABLE2_COLUMNS, TABLE3_COLUMNS]
            missing = [c for cols in known for c in cols
                       if c not in header][:1]
            raise SchemaError(f"{path}: unrecognized header; missing column "
                              f"'{missing[0] if missing else header}'")
        written += _DISPATCH[header](path, out_dir)
    return written


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="plotviz-tables",
        description="Bar charts, pass-ratio grid and markdown mirrors "
                    "of the evaluation tables")
    parser.add_argument("--in", dest="inputs", nargs="+", required=True)
    parser.add_argument("--out", required=True, help="output directory")
    args = parser.parse_args(argv)
    try:
        written = render_tables(args.inputs, args.out)
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return 1
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
