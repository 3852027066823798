import numpy as np
import pytest

from utils.data_loader import (
    REPORT_HEADER,
    build_report_frame,
    format_orders,
    load_profile_knots,
    load_report,
    split_complex_columns,
    write_report,
)


def test_load_profile_knots_skips_comments(tmp_path):
    path = tmp_path / "profile.txt"
    path.write_text("# x1 f\n0.0 0.1\n3.0 0.2\n6.283185307179586 0.1\n")
    knots = load_profile_knots(str(path))
    assert knots.shape == (3, 2)
    assert knots[1, 1] == pytest.approx(0.2)


def test_load_profile_knots_errors(tmp_path):
    with pytest.raises(ValueError, match="not found"):
        load_profile_knots(str(tmp_path / "missing.txt"))
    path = tmp_path / "three.txt"
    path.write_text("0 1 2\n1 2 3\n")
    with pytest.raises(ValueError, match="two columns"):
        load_profile_knots(str(path))


def test_split_complex_columns():
    row = split_complex_columns({}, "u0", 1 - 2j)
    assert row == {"u0_re": 1.0, "u0_im": -2.0}
    row = split_complex_columns({}, "t0", None)
    assert np.isnan(row["t0_re"]) and np.isnan(row["t0_im"])


def test_format_orders_sorted():
    assert format_orders({1: 0.25, -1: 0.5, 0: 0.125}) == "-1:0.5;0:0.125;1:0.25"
    assert format_orders({}) == ""


def test_report_round_trip_keeps_header_and_column_order(tmp_path):
    frame = build_report_frame([{"b": 2.0, "a": 1.0, "extra": "x"}], ("a", "b", "c"))
    assert list(frame.columns) == ["a", "b", "c", "extra"]

    path = tmp_path / "out" / "report.csv"
    write_report(frame, str(path))
    assert path.read_text().splitlines()[0] == REPORT_HEADER
    loaded = load_report(str(path))
    assert list(loaded.columns) == ["a", "b", "c", "extra"]
    assert loaded.loc[0, "b"] == 2.0


def test_load_report_missing_file_gives_empty_frame(tmp_path):
    assert load_report(str(tmp_path / "none.csv")).empty
