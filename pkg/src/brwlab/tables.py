"""CSV artifacts with embedded provenance.

Every table written by the experiment runner starts with '# key = value'
header lines carrying the tool version, the fully resolved configuration,
and the seed, followed by one mandatory column-name row.  Numbers are
rendered with 17 significant digits so that re-running an experiment with
the embedded configuration reproduces the file byte for byte; the
timestamp line is the single sanctioned difference.
"""

from __future__ import annotations

import datetime
import numbers

import numpy as np

__all__ = ["format_number", "write_csv", "compare_csv", "read_header"]

_TIMESTAMP_KEY = "timestamp"


def format_number(v) -> str:
    """Canonical scalar rendering: 17 significant digits for reals."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, numbers.Real):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path, columns, rows, config=None, seed=None, version=None,
              timestamp=True):
    """Write rows with '# key = value' provenance headers.

    config: mapping recorded as '# config.<key> = <value>' in key order.
    rows: iterable of sequences, rendered via format_number.
    """
    lines = []
    if version is not None:
        lines.append(f"# version = {version}")
    if seed is not None:
        lines.append(f"# seed = {format_number(seed)}")
    if timestamp:
        now = datetime.datetime.now(datetime.timezone.utc).isoformat()
        lines.append(f"# {_TIMESTAMP_KEY} = {now}")
    for key in sorted(config or {}):
        lines.append(f"# config.{key} = {format_number((config or {})[key])}")
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(format_number(v) for v in row))
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _comparable_lines(path):
    with open(path, "rb") as fh:
        raw = fh.read().split(b"\n")
    prefix = f"# {_TIMESTAMP_KEY} =".encode()
    return [ln for ln in raw if not ln.startswith(prefix)]


def compare_csv(path_a, path_b) -> bool:
    """Byte equality of two tables, ignoring the timestamp header line."""
    return _comparable_lines(path_a) == _comparable_lines(path_b)


def read_header(path) -> dict:
    """Parse the '# key = value' provenance headers back into a dict."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].partition(" = ")
            out[key.strip()] = value.strip()
    return out
