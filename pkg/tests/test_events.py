"""Event CSV schema: round-trip, validation diagnostics with line numbers."""

import pytest

from clmm.errors import SchemaError
from clmm.events import COLUMNS, HEADER, EventLog

from synthetic import T0, constant_rate_log, gbm_trading_log, lp_row, swap_row


def test_header_is_pinned():
    assert HEADER == (
        "ts,kind,side,amount_y,exec_rate,fee_x,pool_depth,rate_after,"
        "wallet,tick_lower,tick_upper,position_depth"
    )
    assert len(COLUMNS) == 12


def test_round_trip(tmp_path):
    import numpy as np

    log = gbm_trading_log(minutes=30, seed=1, lp_pairs=3)
    path = tmp_path / "events.csv"
    log.write_csv(path)
    back = EventLog.read_csv(path)
    assert len(back) == len(log)
    assert (back.ts == log.ts).all()
    assert list(back.kind) == list(log.kind)
    for col in ("amount_y", "exec_rate", "fee_x", "pool_depth", "rate_after",
                "tick_lower", "tick_upper", "position_depth"):
        a, b = getattr(back, col), getattr(log, col)
        np.testing.assert_array_equal(np.isnan(a), np.isnan(b))
        np.testing.assert_array_equal(a[~np.isnan(a)], b[~np.isnan(b)])


def test_swap_and_lp_columns_are_exclusive(tmp_path):
    log = gbm_trading_log(minutes=5, seed=2, lp_pairs=1)
    path = tmp_path / "events.csv"
    log.write_csv(path)
    lines = path.read_text().strip().splitlines()
    for line in lines[1:]:
        fields = line.split(",")
        if fields[1] == "swap":
            assert all(f == "" for f in fields[8:])
            assert all(f != "" for f in fields[2:8])
        else:
            assert all(f == "" for f in fields[2:8])
            assert fields[8] != ""


def fresh_rows():
    return [
        swap_row(T0, 100.0, 5.0, 1e5, 100.0),
        lp_row(T0 + 60, "mint", "w1", 95.0, 105.0, 10.0),
        lp_row(T0 + 120, "burn", "w1", 95.0, 105.0, 10.0),
    ]


def write_rows(tmp_path, rows):
    path = tmp_path / "events.csv"
    EventLog.from_rows(rows).write_csv(path)
    return path


class TestValidationDiagnostics:
    def test_bad_header_line_1(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("ts,kind\n1,swap\n")
        with pytest.raises(SchemaError) as err:
            EventLog.read_csv(path)
        assert err.value.line == 1

    def test_empty_file(self, tmp_path):
        path = tmp_path / "events.csv"
        path.write_text("")
        with pytest.raises(SchemaError):
            EventLog.read_csv(path)

    def test_wrong_field_count_names_line(self, tmp_path):
        path = write_rows(tmp_path, fresh_rows())
        lines = path.read_text().splitlines()
        lines[2] = lines[2] + ",extra"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError) as err:
            EventLog.read_csv(path)
        assert err.value.line == 3

    def test_decreasing_timestamps(self, tmp_path):
        rows = fresh_rows()
        rows[2]["ts"] = T0 - 5
        path = tmp_path / "events.csv"
        log = EventLog.from_rows(rows)
        log.write_csv(path)
        with pytest.raises(SchemaError) as err:
            EventLog.read_csv(path)
        assert "nondecreasing" in str(err.value)

    def test_bad_kind(self, tmp_path):
        path = write_rows(tmp_path, fresh_rows())
        text = path.read_text().replace("mint", "mintt")
        path.write_text(text)
        with pytest.raises(SchemaError) as err:
            EventLog.read_csv(path)
        assert err.value.line == 3

    def test_swap_with_lp_fields(self, tmp_path):
        path = write_rows(tmp_path, fresh_rows())
        lines = path.read_text().splitlines()
        fields = lines[1].split(",")
        fields[8] = "w9"
        lines[1] = ",".join(fields)
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaError) as err:
            EventLog.read_csv(path)
        assert err.value.line == 2 and "wallet" in str(err.value)

    def test_nonnumeric_rate(self, tmp_path):
        path = write_rows(tmp_path, fresh_rows())
        text = path.read_text().replace("100.0,100.0", "abc,100.0", 1)
        path.write_text(text)
        with pytest.raises(SchemaError):
            EventLog.read_csv(path)

    def test_negative_depth(self, tmp_path):
        rows = fresh_rows()
        rows[1]["position_depth"] = -1.0
        with pytest.raises(SchemaError) as err:
            write_rows(tmp_path, rows)
            EventLog.read_csv(tmp_path / "events.csv")
        assert err.value.line == 3

    def test_fee_consistency_optional(self):
        log = constant_rate_log(minutes=3)
        log.validate(fee_tier=0.0005)  # consistent by construction
        with pytest.raises(SchemaError):
            log.validate(fee_tier=0.003)

    def test_inverted_ticks(self, tmp_path):
        rows = fresh_rows()
        rows[1]["tick_lower"], rows[1]["tick_upper"] = 105.0, 95.0
        log = EventLog.from_rows(rows)
        with pytest.raises(SchemaError) as err:
            log.validate()
        assert err.value.line == 3
