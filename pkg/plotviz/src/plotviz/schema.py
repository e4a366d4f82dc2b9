"""CSV schema validation shared by the plotting scripts.

The inputs are the evaluation harness's report files; these readers are
strict about the column layout so a wrong or truncated file fails loudly
instead of producing an empty plot.
"""

from __future__ import annotations

import csv
from pathlib import Path


class SchemaError(Exception):
    """Input CSV does not match the expected report schema."""


ECDF_COLUMNS = ["error_m", "cdf"]
TABLE1_COLUMNS = ["p_f", "P_T_dBm", "accuracy_pct"]
TABLE2_COLUMNS = ["approach", "p_f", "P_T_dBm", "p95_cm"]
TABLE3_COLUMNS = ["testset", "p_f_train", "P_T_dBm", "pass_pct"]


def read_csv(path, expected_columns, numeric_columns):
    """Read a report CSV, enforcing the exact header and numeric fields.

    Returns a list of dicts with numeric columns converted to float.
    """
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"{path}: no such file")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        missing = [c for c in expected_columns if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column '{missing[0]}'")
        if header != expected_columns:
            raise SchemaError(f"{path}: expected columns {expected_columns}, "
                              f"found {header}")
        rows = []
        for lineno, fields in enumerate(reader, start=2):
            if len(fields) != len(header):
                raise SchemaError(f"{path}: line {lineno}: "
                                  f"expected {len(header)} fields")
            row = dict(zip(header, fields))
            for col in numeric_columns:
                try:
                    row[col] = float(row[col])
                except ValueError:
                    raise SchemaError(f"{path}: line {lineno}: column "
                                      f"'{col}' is not numeric") from None
            rows.append(row)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows


def read_ecdf(path):
    rows = read_csv(path, ECDF_COLUMNS, ECDF_COLUMNS)
    errors = [r["error_m"] for r in rows]
    cdf = [r["cdf"] for r in rows]
    if any(b < a for a, b in zip(cdf, cdf[1:])):
        raise SchemaError(f"{path}: cdf column is not non-decreasing")
    return errors, cdf


def read_table1(path):
    return read_csv(path, TABLE1_COLUMNS, ["p_f", "P_T_dBm", "accuracy_pct"])


def read_table2(path):
    return read_csv(path, TABLE2_COLUMNS, ["p_f", "P_T_dBm", "p95_cm"])


def read_table3(path):
    return read_csv(path, TABLE3_COLUMNS, ["p_f_train", "P_T_dBm", "pass_pct"])
