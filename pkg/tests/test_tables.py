"""Provenance-stamped CSV artifacts: rendering, replay comparison."""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from brwlab import tables


def test_format_number_cases():
    assert tables.format_number(True) == "true"
    assert tables.format_number(False) == "false"
    assert tables.format_number(3) == "3"
    assert tables.format_number(np.int64(-4)) == "-4"
    assert tables.format_number(0.5) == "0.5"
    assert tables.format_number("strict-descending") == "strict-descending"


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_seventeen_digits_round_trip(v):
    assert float(tables.format_number(v)) == v


def test_write_then_reread_header(tmp_path):
    path = tmp_path / "t.csv"
    tables.write_csv(path, ("a", "b"), [(1, 2.5), (3, -0.125)],
                     config={"law": "two-point", "n": 8}, seed=42,
                     version="0.1.0")
    header = tables.read_header(path)
    assert header["version"] == "0.1.0"
    assert header["seed"] == "42"
    assert header["config.law"] == "two-point"
    assert header["config.n"] == "8"
    body = path.read_text().splitlines()
    assert body[-2:] == ["1,2.5", "3,-0.125"]


def test_compare_ignores_timestamp_only(tmp_path):
    a, b, c = (tmp_path / n for n in ("a.csv", "b.csv", "c.csv"))
    rows = [(k, math.sqrt(k)) for k in range(5)]
    cfg = {"x": 0.0}
    tables.write_csv(a, ("k", "r"), rows, config=cfg, seed=1)
    tables.write_csv(b, ("k", "r"), rows, config=cfg, seed=1)
    tables.write_csv(c, ("k", "r"), rows, config=cfg, seed=2)
    assert tables.compare_csv(a, b)
    assert not tables.compare_csv(a, c)


def test_compare_detects_one_ulp_change(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    tables.write_csv(a, ("v",), [(0.1,)])
    tables.write_csv(b, ("v",), [(np.nextafter(0.1, 1.0),)])
    assert not tables.compare_csv(a, b)


def test_rows_accept_mixed_types(tmp_path):
    path = tmp_path / "m.csv"
    tables.write_csv(path, ("name", "ok", "val"),
                     [("laplace", True, np.float64(0.25))])
    assert path.read_text().splitlines()[-1] == "laplace,true,0.25"


def test_missing_file_raises(tmp_path):
    with pytest.raises(OSError):
        tables.compare_csv(tmp_path / "x.csv", tmp_path / "y.csv")
