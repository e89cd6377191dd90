import io
import math
from decimal import Decimal
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra import numpy as hnp

from imbfp import kernels
from imbfp.etf import build_universe
from imbfp.feed import parse_line, parse_nanotime
from imbfp.fingerprint import (
    FP_SIZE,
    BinGrid,
    DailyAggregate,
    Fingerprint,
    FingerprintFormatError,
    aggregate_buffer,
    aggregate_day,
    build_fingerprint,
    day_aggregates,
    dollar_imbalance,
    dumps_fingerprint,
    loads_fingerprint,
    log1p_transform,
    overlap_weights,
    parse_header,
    read_fingerprint,
    rebin,
    time_edges,
    write_fingerprint,
    write_pgm,
)
from imbfp.synth import SynthConfig, generate_day

from conftest import SAMPLE_IMBALANCE, SAMPLE_LINES


def test_dollar_imbalance_examples():
    assert dollar_imbalance(Decimal("66.21"), 1141, 0) == Decimal("75545.61")
    assert dollar_imbalance(Decimal("10.00"), 0, 100) == Decimal("1000.00")
    # hand multiplication: 66.21 * 1141 = 66*1141 + 0.21*1141
    assert Decimal(66 * 1141) + Decimal("0.21") * 1141 == Decimal("75545.61")


@given(st.decimals(min_value=0, max_value=10**6, places=4), st.integers(0, 10**9))
def test_dollar_imbalance_zero_when_settled(p, q):
    assert dollar_imbalance(p, q, q) == 0


def test_log1p_transform():
    assert log1p_transform(0) == 0
    assert log1p_transform(math.e - 1) == pytest.approx(1.0, abs=1e-15)
    assert log1p_transform(Decimal("75545.61")) == pytest.approx(math.log(75546.61), rel=1e-15)
    # decimal-arithmetic oracle; ln(1 + 75545.61) = 11.232505...
    assert log1p_transform(75545.61) == pytest.approx(float(Decimal("75546.61").ln()), rel=1e-15)
    with pytest.raises(ValueError):
        log1p_transform(-1e-9)


def test_grid_has_450_time_bins():
    g = BinGrid()
    assert g.n_time_bins == (16 - 3.5) * 3600 / 100 == 450
    assert g.n_prices == 450


def test_sample_message_lands_in_bin_215():
    msg = parse_line(SAMPLE_IMBALANCE)
    agg = aggregate_day([msg])
    offset = parse_nanotime("09:29:34.061214976") - parse_nanotime("03:30:00.0")
    assert offset // 10**9 == 21_574
    assert np.flatnonzero(agg.msg_count).tolist() == [21_574 // 100] == [215]
    assert np.count_nonzero(agg.dollar) == 1
    assert agg.dollar.sum() == pytest.approx(75545.61, rel=1e-15)


def test_empty_aggregate_and_fingerprint():
    agg = aggregate_day([])
    assert agg.msg_count.sum() == 0 and agg.dollar.sum() == 0
    for mode in ("time_price", "state_hist"):
        fp = build_fingerprint(agg, mode)
        assert fp.cells.shape == (FP_SIZE, FP_SIZE)
    assert not build_fingerprint(agg, "time_price").cells.any()


def test_out_of_session_counted_as_discarded():
    lines = [
        "105,1,03:29:59.999999999,AAA,1,10,0,100,0,0930,O,B,0,0,0",
        "105,2,03:30:00.000000000,AAA,1,10,0,100,0,0930,O,B,0,0,0",
        "105,3,15:59:59.999999999,AAA,1,10,0,100,0,1600,C,B,0,0,0",
        "105,4,16:00:00.000000000,AAA,1,10,0,40,0,1600,C,B,0,0,0",
    ]
    agg = aggregate_day(map(parse_line, lines))
    assert agg.discarded == 2
    assert agg.msg_count[0] == 1 and agg.msg_count[449] == 1
    assert agg.messages == 4
    assert agg.settle_qty == {"AAA": 40}
    # |10 * (100 - 40)| in each of the two in-session messages
    assert agg.dollar.sum() == pytest.approx(1200.0)


def test_degenerate_price_range_goes_to_one_column():
    lines = [f"105,{i},1{i}:00:00.0,AAA,1,25.5,0,{100 * i},0,0930,O,B,0,0,0" for i in range(1, 5)]
    agg = aggregate_day(map(parse_line, lines))
    assert agg.grid.price_min == agg.grid.price_max == 25.5
    assert np.flatnonzero(agg.dollar.sum(axis=0)).tolist() == [0]


def oracle_overlap(src, dst):
    # exact rational overlap lengths, computed cell by cell
    src = [Fraction(x) for x in src]
    dst = [Fraction(x) for x in dst]
    out = []
    for j in range(len(dst) - 1):
        row = []
        for i in range(len(src) - 1):
            ov = max(Fraction(0), min(dst[j + 1], src[i + 1]) - max(dst[j], src[i]))
            row.append(float(ov / (src[i + 1] - src[i])))
        out.append(row)
    return np.array(out)


def test_overlap_weights_against_exact_oracle():
    src = [0, 1, 2, 3, 4, 5, 6, 7]
    dst = [0, 7 / 3, 14 / 3, 7]
    assert np.allclose(overlap_weights(src, dst), oracle_overlap(src, dst), atol=1e-15)
    assert np.allclose(overlap_weights(src, dst).sum(axis=0), 1.0)


@settings(max_examples=50, deadline=None)
@given(
    st.integers(1, 4),
    hnp.arrays(np.float64, st.tuples(st.integers(96, 460), st.integers(1, 460)), elements=st.floats(0, 1e9)),
)
def test_rebin_conserves_post_transform_mass(seed, raw):
    values = np.log1p(raw)
    for warp in ("log", "none"):
        out = rebin(values, time_edges(values.shape[0], warp), np.arange(values.shape[1] + 1.0))
        assert out.shape == (FP_SIZE, FP_SIZE)
        total = values.sum()
        assert abs(out.sum() - total) <= 1e-9 * max(total, 1e-300)


@pytest.mark.parametrize("n_time", [449, 450])
def test_dimensions_independent_of_bin_count(n_time):
    rng = np.random.default_rng(n_time)
    grid = BinGrid()
    dollar = rng.exponential(1e5, size=(n_time, n_time)) * (rng.random((n_time, n_time)) < 0.05)
    agg = DailyAggregate(grid, dollar, rng.integers(0, 50, n_time))
    for mode in ("time_price", "state_hist"):
        fp = build_fingerprint(agg, mode)
        assert fp.cells.shape == (FP_SIZE, FP_SIZE)
        assert np.isfinite(fp.cells).all() and (fp.cells >= 0).all()
    fp = build_fingerprint(agg, "time_price")
    assert fp.cells.sum() == pytest.approx(np.log1p(dollar).sum(), rel=1e-9)


def test_single_cell_mass_preserved():
    agg = aggregate_day([parse_line(SAMPLE_IMBALANCE)])
    fp = build_fingerprint(agg)
    assert fp.cells.sum() == pytest.approx(math.log1p(75545.61), rel=1e-9)


def test_state_hist_counts_intervals():
    grid = BinGrid()
    counts = np.zeros(450, dtype=np.int64)
    counts[:10] = 3
    dollar = np.zeros((450, 450))
    dollar[:10, 0] = 1e4
    fp = build_fingerprint(DailyAggregate(grid, dollar, counts), "state_hist")
    # 10 intervals share one cell, 440 empty intervals share the origin cell
    assert sorted(np.expm1(fp.cells[fp.cells > 0]).round().tolist()) == [10.0, 440.0]
    assert np.expm1(fp.cells[0, 0]).round() == 440


@pytest.fixture(scope="module")
def small_day():
    return generate_day(SynthConfig(total_messages=20_000, n_symbols=600, seed=11), "2020-09-09")


def test_buffer_route_equals_object_route(small_day):
    universe = build_universe(small_day.names)
    data = small_day.text().encode()
    m_fast, e_fast, counts = aggregate_buffer(data, universe, day_label="d")
    m_obj, e_obj = day_aggregates(map(parse_line, small_day.lines), universe, day_label="d")
    assert m_fast == m_obj
    assert e_fast == e_obj
    assert counts[0] == len(small_day.lines)


def test_counts_equal_generator_truth(small_day):
    universe = build_universe(small_day.names)
    market, etf, _ = aggregate_buffer(small_day.text().encode(), universe)
    t = small_day.truth
    assert market.msg_count.tolist() == t["market_bin_counts"]
    assert etf.msg_count.tolist() == t["etf_bin_counts"]
    assert market.dollar.sum() == pytest.approx(t["market_dollar"], rel=1e-9)
    assert etf.dollar.sum() == pytest.approx(t["etf_dollar"], rel=1e-9)
    assert market.messages == t["type105"]


def test_count_conservation_with_faults():
    day = generate_day(SynthConfig(total_messages=5000, n_symbols=300, fault_fraction=0.02, seed=2), "2019-10-07")
    universe = build_universe(day.names)
    market, _, (lines, ok, bad) = aggregate_buffer(day.text().encode(), universe)
    assert market.messages == ok
    # the scanner counts non-blank lines; blank fault lines are skipped
    assert lines == sum(1 for ln in day.lines if ln)
    assert bad > 0


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")
def test_backends_agree(small_day):
    py, cy = kernels.get_backend("python"), kernels.get_backend("compiled")
    data = small_day.text().encode() + b"105,1\n105\n105,1,09:00:00.0,,1,1,1,1,1,1,M,B,1,1,1\n"
    a, b = py.scan_imbalances(data), cy.scan_imbalances(data)
    for x, y in zip(a[:4], b[:4]):
        assert np.array_equal(x, y)
    assert a[4] == b[4] and a[5] == b[5]
    rng = np.random.default_rng(0)
    t = rng.integers(-1, 450, 10_000)
    p = rng.integers(0, 450, 10_000)
    d = rng.random(10_000)
    ga, ca = py.accumulate(t, p, d, 450, 450)
    gb, cb = cy.accumulate(t, p, d, 450, 450)
    assert np.array_equal(ga, gb) and np.array_equal(ca, cb)


@pytest.mark.skipif("compiled" not in kernels.BACKENDS, reason="extension not built")
@settings(max_examples=200)
@given(st.lists(st.sampled_from(SAMPLE_LINES + ("105", "105,", "105,1,09:00:00.0,X,1,1.5,0,7,0,0930,M, ,0,0,0", "105,1,09:00:00,X")), max_size=8))
def test_backends_agree_on_line_soup(lines):
    data = "\n".join(lines).encode()
    a = kernels.get_backend("python").scan_imbalances(data)
    b = kernels.get_backend("compiled").scan_imbalances(data)
    assert all(np.array_equal(x, y) for x, y in zip(a[:4], b[:4]))
    assert a[4:] == b[4:]


def test_compiled_and_python_nanotime_agree():
    for backend in kernels.BACKENDS.values():
        assert backend.parse_nanotime("09:29:34.061214976") == 34_174_061_214_976
        with pytest.raises(kernels.NanoTimeError):
            backend.parse_nanotime("09:29:34")


def test_bit_determinism(small_day):
    universe = build_universe(small_day.names)
    data = small_day.text().encode()
    fps = [build_fingerprint(aggregate_buffer(data, universe)[0]) for _ in range(2)]
    assert fps[0].cells.tobytes() == fps[1].cells.tobytes()


HAND_SAMPLE = "FPRINT 1 rows=96 cols=96 day=2019-10-07 family=market mode=time_price\n" + "\n".join(
    " ".join("0.5" if (i, j) == (3, 4) else "0" for j in range(96)) for i in range(96)
)


def test_header_parses():
    meta = parse_header("FPRINT 1 rows=96 cols=96 day=2019-10-07 family=market mode=time_price")
    assert meta == {"rows": 96, "cols": 96, "day": "2019-10-07", "family": "market", "mode": "time_price"}
    fp = loads_fingerprint(HAND_SAMPLE)
    assert fp.day_label == "2019-10-07" and fp.cells[3, 4] == 0.5 and fp.cells.sum() == 0.5


@settings(max_examples=25)
@given(hnp.arrays(np.float64, (96, 96), elements=st.floats(0, 1e6)), st.sampled_from(["", "2020-10-05"]))
def test_fingerprint_text_round_trip(cells, day):
    fp = Fingerprint(cells, day, "etf", "state_hist")
    assert loads_fingerprint(dumps_fingerprint(fp)) == fp
    buf = io.StringIO()
    write_fingerprint(fp, buf)
    assert read_fingerprint(io.StringIO(buf.getvalue())) == fp


def test_fingerprint_format_errors():
    text = HAND_SAMPLE
    with pytest.raises(FingerprintFormatError, match="expected 96 rows, found 50"):
        loads_fingerprint("\n".join(text.splitlines()[:51]))
    with pytest.raises(FingerprintFormatError, match="version"):
        loads_fingerprint(text.replace("FPRINT 1", "FPRINT 2", 1))
    with pytest.raises(FingerprintFormatError, match="dimension mismatch"):
        loads_fingerprint(text.replace("rows=96", "rows=64", 1))
    with pytest.raises(FingerprintFormatError):
        loads_fingerprint("")


def test_pgm_export(tmp_path):
    cells = np.zeros((96, 96))
    cells[0, 0] = 2.0
    cells[1, 1] = 1.0
    write_pgm(cells, tmp_path / "x.pgm")
    raw = (tmp_path / "x.pgm").read_bytes()
    header = b"P5\n96 96\n255\n"
    assert raw.startswith(header)
    pixels = np.frombuffer(raw[len(header):], dtype=np.uint8).reshape(96, 96)
    assert pixels[0, 0] == 255 and pixels[1, 1] == 128 and pixels.sum() == 383
