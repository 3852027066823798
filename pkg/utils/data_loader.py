import logging
import os

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

REPORT_HEADER = "# grating-bench v1"


def load_profile_knots(path):
    """Load two-column `x1 f(x1)` profile samples from a text file"""
    if not os.path.exists(path):
        raise ValueError(f"profile file not found: {path}")
    try:
        knots = np.loadtxt(path, dtype=float, comments="#", ndmin=2)
    except Exception as e:
        raise ValueError(f"cannot read profile file {path}: {str(e)}") from e
    if knots.shape[1] != 2:
        raise ValueError(f"profile file {path} must have exactly two columns, found {knots.shape[1]}")
    return knots


def split_complex_columns(row, name, value):
    """Store a complex value as `<name>_re`, `<name>_im` columns"""
    value = complex(value) if value is not None else complex(np.nan, np.nan)
    row[f"{name}_re"] = value.real
    row[f"{name}_im"] = value.imag
    return row


def format_orders(values):
    """Serialize an {order: value} mapping as `n:value;...` text"""
    return ";".join(f"{n}:{value:.12g}" for n, value in sorted(values.items()))


def build_report_frame(rows, columns):
    """Collect report rows into a DataFrame with a fixed column order"""
    df = pd.DataFrame(rows)
    for column in columns:
        if column not in df.columns:
            df[column] = np.nan
    extra = [column for column in df.columns if column not in columns]
    return df[list(columns) + extra]


def write_report(df, path):
    """Write a report frame as CSV preceded by the versioned header line"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)

    with open(path, "w", newline="") as handle:
        handle.write(REPORT_HEADER + "\n")
        df.to_csv(handle, index=False, float_format="%.12g")

    logger.info("wrote %d rows to %s", len(df), path)
    return path


def load_report(path):
    """Load a report written by write_report"""
    try:
        return pd.read_csv(path, skiprows=1)
    except Exception as e:
        logger.error("Error loading report %s: %s", path, str(e))
        return pd.DataFrame()
