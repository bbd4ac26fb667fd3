import json

import numpy as np
import pytest

from services.errors import UsageError
from services.variance import CiMethod
from utils.column_parser import parse_choices, parse_contrast, parse_float_list, parse_list
from utils.report_helpers import dump_json, format_number, render_table, to_jsonable, write_report


def test_parse_list():
    assert parse_list(" z1, z2 ,z3") == ["z1", "z2", "z3"]
    assert parse_list("a,b,a") == ["a", "b"]
    assert parse_list("") == []
    assert parse_list(None) == []


def test_parse_float_list():
    assert parse_float_list("0.75,0.6,.5,1e-1") == [0.75, 0.6, 0.5, 0.1]
    with pytest.raises(UsageError):
        parse_float_list("0.5,half")
    with pytest.raises(UsageError):
        parse_float_list("")


def test_parse_contrast():
    assert parse_contrast("trt, ctl") == ("trt", "ctl")
    assert parse_contrast(None) is None
    with pytest.raises(UsageError):
        parse_contrast("a,b,c")


def test_parse_choices():
    assert parse_choices("hc2,hc0", ["hc0", "hc2"], "--se") == ["hc2", "hc0"]
    with pytest.raises(UsageError, match="--se"):
        parse_choices("hc9", ["hc0", "hc2"], "--se")


def test_to_jsonable():
    value = to_jsonable({"x": np.float64(1.5), "n": np.int64(3), "bad": float("nan"),
                         "arr": np.array([1.0, 2.0]), "m": CiMethod.WELCH_T, "flag": np.bool_(True)})
    assert value == {"x": 1.5, "n": 3, "bad": None, "arr": [1.0, 2.0], "m": "welch_t", "flag": True}


def test_dump_json_is_stable():
    text = dump_json({"b": 1.0 / 3, "a": [1, 2]})
    assert text == dump_json({"a": [1, 2], "b": 1.0 / 3})
    assert text.endswith("\n")
    assert json.loads(text)["b"] == 1.0 / 3


def test_format_number():
    assert format_number(1.0 / 3) == "0.333333"
    assert format_number(None) == "—"
    assert format_number(12) == "12"


def test_render_table():
    text = render_table(["name", "value"], [["alpha", 1.5], ["b", None]], "Title")
    lines = text.splitlines()
    assert lines[0] == "Title"
    assert lines[1].startswith("name")
    assert lines[3] == "alpha    1.5"
    assert lines[4].endswith("—")


def test_write_report(tmp_path, capsys):
    write_report("hello\n")
    assert capsys.readouterr().out == "hello\n"
    target = tmp_path / "nested" / "report.json"
    write_report("{}\n", target)
    assert target.read_text() == "{}\n"
