import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lobkit.synthetic import TapeParams, generate_records, generate_series, generate_synthetic_tape
from lobkit.trade_tape import (Aggressor, Flag, TapeError, TradeClockSeries, TradeRecord, build_ledger,
                               build_series, filter_tape, ingest, write_tape)

HEADER = "seq,ts_ns,price,size,aggressor,flags,bid,ask\n"


def _tape(tmp_path, rows):
    p = tmp_path / "tape.csv"
    p.write_text(HEADER + "".join(r + "\n" for r in rows))
    return p


def test_ingest_parses_prices_as_ticks(tmp_path):
    recs = ingest(_tape(tmp_path, ["1,10,100.0100,200,B,,100.0000,100.0100",
                                   "2,20,99.9900,100,S,C;H,99.9900,100.0100"]))
    assert recs[0].price == 1_000_100 and recs[0].aggressor is Aggressor.BUY
    assert recs[1].flags == {Flag.SPECIAL_DEAL, Flag.HIDDEN}
    assert all(r.at_quotes for r in recs)


@pytest.mark.parametrize("row, match", [
    ("1,10,100.00001,200,B,,100.0000,100.0100", "fractional"),
    ("1,10,100.0100,0,B,,100.0000,100.0100", "size"),
    ("1,10,100.0100,200,X,,100.0000,100.0100", "aggressor"),
    ("1,10,100.0100,200,B,Z,100.0000,100.0100", "flag"),
    ("1,10,100.0100,200,B,,100.0100,100.0100", "below ask"),
    ("1,10,abc,200,B,,100.0000,100.0100", "decimal"),
])
def test_ingest_rejects_bad_rows(tmp_path, row, match):
    with pytest.raises(TapeError, match=match) as exc:
        ingest(_tape(tmp_path, [row]))
    assert exc.value.line == 2


def test_ingest_rejects_nonmonotone_seq(tmp_path):
    rows = ["2,10,100.0100,200,B,,100.0000,100.0100", "2,20,100.0100,200,B,,100.0000,100.0100"]
    with pytest.raises(TapeError, match="non-monotone"):
        ingest(_tape(tmp_path, rows))


def test_ingest_missing_column(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("seq,price\n1,100\n")
    with pytest.raises(TapeError, match="missing column"):
        ingest(p)


def test_filter_drops_special_and_hidden():
    recs = generate_records(TapeParams(n_trades=500, special_rate=0.1, hidden_rate=0.1), 3)
    kept, rep = filter_tape(recs)
    assert rep.n_kept == len(kept)
    assert all(not r.flags for r in kept)
    assert rep.n_dropped == sum(1 for r in recs if r.flags)


def test_off_quote_trades_are_rejected():
    good = TradeRecord(1, 0, 1_000_000, 100, Aggressor.SELL, frozenset(), 1_000_000, 1_000_001)
    bad = TradeRecord(2, 1, 1_000_005, 100, Aggressor.BUY, frozenset(), 1_000_000, 1_000_001)
    ser = build_series([good, bad])
    assert len(ser) == 1 and ser.rejected == (2,)


def test_provider_cash_sign_convention():
    # a sell market order hits the bid: provider buys 100 at the bid
    r = TradeRecord(1, 0, 1_000_000, 100, Aggressor.SELL, frozenset(), 1_000_000, 1_000_002)
    ser = build_series([r])
    assert ser.dL.tolist() == [100]
    assert ser.dK.tolist() == pytest.approx([-100 * 100.0])
    led = build_ledger(ser)
    # marked at mid 100.0001: +0.01 half-spread gain on 100 shares
    assert led.X[-1] == pytest.approx(100 * 0.0001)


def test_write_ingest_round_trip(tmp_path):
    recs = generate_records(TapeParams(n_trades=200, special_rate=0.05), 9)
    path = tmp_path / "t.csv"
    write_tape(recs, path)
    assert ingest(path) == recs


def test_series_json_round_trip(tmp_path):
    ser = generate_series(TapeParams(n_trades=300), 1)
    ser.save(tmp_path / "s.json")
    back = TradeClockSeries.load(tmp_path / "s.json")
    for a in ("mid_h", "spread_h", "dL", "dK_h"):
        np.testing.assert_array_equal(getattr(ser, a), getattr(back, a))


def test_from_arrays_matches_build_series():
    ser = generate_series(TapeParams(n_trades=400), 4)
    again = TradeClockSeries.from_arrays(ser.mid_h, ser.spread_h, ser.dL, ser.tick)
    np.testing.assert_array_equal(again.dK_h, ser.dK_h)


def test_window_is_inclusive():
    ser = generate_series(TapeParams(n_trades=50), 2)
    w = ser.window(10, 19)
    assert len(w) == 10
    np.testing.assert_array_equal(w.mid_h, ser.mid_h[10:21])


def test_synthetic_tape_file_is_deterministic(tmp_path):
    a = generate_synthetic_tape(tmp_path / "a.csv", TapeParams(n_trades=100), 5)
    b = generate_synthetic_tape(tmp_path / "b.csv", TapeParams(n_trades=100), 5)
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 3000), st.integers(0, 2**32 - 1))
def test_ledger_wealth_is_mid_marked(n, seed):
    ser = generate_series(TapeParams(n_trades=n, impact_compliance=0.8), seed)
    led = build_ledger(ser)
    assert led.L[0] == led.K_h[0] == 0
    np.testing.assert_array_equal(led.X_h, ser.mid_h * led.L + led.K_h)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 800), st.integers(0, 2**32 - 1))
def test_array_series_matches_record_pipeline(n, seed):
    params = TapeParams(n_trades=n, impact_compliance=0.7, recovery_compliance=0.8)
    fast = generate_series(params, seed)
    recs = generate_records(TapeParams(**{**params.__dict__, "n_trades": n + 1}), seed)
    last = recs.pop()
    slow = build_series(recs, params.tick, close_mid_h=last.bid_before + last.ask_before)
    for a in ("mid_h", "spread_h", "dL", "dK_h"):
        np.testing.assert_array_equal(getattr(fast, a), getattr(slow, a))
