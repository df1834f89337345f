"""
output_writer 测试：数值格式、CSV 头注释、JSON 元数据
"""

import json
import math

import numpy as np
import pytest

from output_writer import ArtifactWriter, format_value, read_csv
from run_config import TOOL_VERSION


@pytest.fixture
def writer(tmp_path):
    return ArtifactWriter(str(tmp_path / "out"), "abc123def456", "free")


def test_format_value():
    assert format_value(0.1) == "0.10000000000000001"
    assert format_value(3) == "3"
    assert format_value(np.int64(7)) == "7"
    assert format_value(True) == "1"
    assert format_value(math.nan) == "nan"
    assert format_value(-math.inf) == "-inf"
    assert float(format_value(1.0 / 3.0)) == 1.0 / 3.0


def test_csv_header_and_body(writer):
    path = writer.write_csv("t.csv", ("a", "b"), [[1.5, 2], [math.nan, -0.25]], {"units": "natural", "dtau": 0.5})
    with open(path, encoding="utf-8") as f:
        lines = f.read().splitlines()
    assert lines[0] == f"# tool: zitter-toolkit {TOOL_VERSION}"
    assert lines[1] == "# config_hash: abc123def456"
    assert lines[2] == "# command: free"
    assert lines[3] == "# units: natural"
    assert lines[4] == "# dtau: 0.5"
    assert lines[5] == "a,b"
    assert lines[6] == "1.5,2"
    assert lines[7] == "nan,-0.25"

    header, columns, data = read_csv(path)
    assert header["config_hash"] == "abc123def456"
    assert columns == ["a", "b"]
    assert data.shape == (2, 2)
    assert math.isnan(data[1, 0])
    assert writer.written == [path]


def test_csv_rejects_ragged_rows(writer):
    with pytest.raises(ValueError):
        writer.write_csv("bad.csv", ("a", "b"), [[1.0]])


def test_empty_csv_reads_back(writer):
    path = writer.write_csv("empty.csv", ("a", "b", "c"), [])
    _, columns, data = read_csv(path)
    assert columns == ["a", "b", "c"]
    assert data.shape == (0, 3)


def test_json_has_meta_and_no_nan(writer):
    path = writer.write_json("r.json", {"value": math.nan, "arr": np.array([1.0, 2.0]), "ok": np.bool_(True)})
    with open(path, encoding="utf-8") as f:
        text = f.read()
    document = json.loads(text)
    assert document["_meta"] == {"command": "free", "config_hash": "abc123def456",
                                 "tool": "zitter-toolkit", "version": TOOL_VERSION}
    assert document["value"] is None
    assert document["arr"] == [1.0, 2.0]
    assert document["ok"] is True
    assert "NaN" not in text


def test_identical_payloads_give_identical_bytes(tmp_path):
    rows = [[0.1 * i, i] for i in range(5)]
    paths = []
    for name in ("x", "y"):
        w = ArtifactWriter(str(tmp_path / name), "h", "scan")
        paths.append(w.write_csv("s.csv", ("p", "n"), rows))
    with open(paths[0], "rb") as f0, open(paths[1], "rb") as f1:
        assert f0.read() == f1.read()
