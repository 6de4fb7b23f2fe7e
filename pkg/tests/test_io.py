import math

import numpy as np

from kerrkit.io import csv_text, format_value, json_text, jsonable, write_csv


def test_format_value():
    assert format_value(True) == "true"
    assert format_value(np.int64(3)) == "3"
    assert format_value(0.1) == "0.1"
    assert format_value(float("nan")) == "nan"
    assert format_value(-math.inf) == "-inf"
    assert format_value(None) == ""


def test_float_roundtrip():
    x = 1 / 3
    assert float(format_value(x)) == x


def test_csv_uses_unix_newlines(tmp_path):
    p = write_csv(tmp_path / "a.csv", ("x", "y"), [(1, 2.5), (2, True)])
    assert p.read_bytes() == b"x,y\n1,2.5\n2,true\n"
    assert csv_text(["a"], []) == "a\n"


def test_json_is_canonical():
    obj = {"b": np.array([1.0, np.nan]), "a": 1 + 2j, "c": np.float64(0.5)}
    assert jsonable(obj)["b"] == [1.0, None]
    assert json_text(obj) == json_text(dict(reversed(list(obj.items()))))
    assert json_text(obj).startswith('{\n  "a"')
