"""Daily time x price dollar-imbalance aggregation and 96x96 fingerprints."""

from __future__ import annotations

import io
import math
import os
from dataclasses import dataclass, field, replace
from decimal import Decimal
from typing import Iterable, Mapping

import numpy as np

from . import kernels
from .feed import ImbalanceMessage, parse_nanotime

FP_SIZE = 96
FP_VERSION = 1
FAMILIES = ("market", "etf", "fake")
MODES = ("time_price", "state_hist")
NS = 1_000_000_000


@dataclass(frozen=True)
class BinGrid:
    """Session window, 100-second time bins and per-day price bins."""

    session_start: int = parse_nanotime("03:30:00.0")
    session_end: int = parse_nanotime("16:00:00.0")
    time_bin_width: int = 100
    n_price_bins: int | None = None
    price_min: float = 0.0
    price_max: float = 0.0
    price_scale: str = "log"

    def __post_init__(self):
        if self.session_end <= self.session_start:
            raise ValueError("session_end must be after session_start")
        if self.time_bin_width <= 0:
            raise ValueError("time_bin_width must be positive")
        if self.n_price_bins is not None and self.n_price_bins < 1:
            raise ValueError("n_price_bins must be >= 1")
        if self.price_scale not in ("log", "linear"):
            raise ValueError(f"unknown price scale {self.price_scale!r}")

    @property
    def n_time_bins(self) -> int:
        width = self.time_bin_width * NS
        return -(-(self.session_end - self.session_start) // width)

    @property
    def n_prices(self) -> int:
        return self.n_price_bins if self.n_price_bins is not None else self.n_time_bins

    def time_bin(self, times) -> np.ndarray:
        """Bin index per timestamp; -1 outside ``[session_start, session_end)``."""
        t = np.asarray(times, dtype=np.int64)
        idx = (t - self.session_start) // (self.time_bin_width * NS)
        inside = (t >= self.session_start) & (t < self.session_end)
        return np.where(inside, idx, -1).astype(np.int64)

    def price_bin(self, prices) -> np.ndarray:
        p = np.asarray(prices, dtype=np.float64)
        n = self.n_prices
        idx = np.zeros(p.shape, dtype=np.int64)
        lo, hi = self.price_min, self.price_max
        if hi <= lo or lo <= 0 and self.price_scale == "log":
            return idx
        pos = p > 0
        if self.price_scale == "log":
            frac = (np.log(np.where(pos, p, lo)) - math.log(lo)) / (math.log(hi) - math.log(lo))
        else:
            frac = (p - lo) / (hi - lo)
        raw = np.floor(frac * n)
        idx = np.clip(raw, 0, n - 1).astype(np.int64)
        return np.where(pos, idx, 0)

    def with_price_range(self, prices) -> "BinGrid":
        """Copy whose price range spans the positive entries of ``prices``."""
        p = np.asarray(prices, dtype=np.float64)
        p = p[p > 0]
        if p.size == 0:
            return replace(self, price_min=0.0, price_max=0.0)
        return replace(self, price_min=float(p.min()), price_max=float(p.max()))


@dataclass(eq=False)
class DailyAggregate:
    grid: BinGrid
    dollar: np.ndarray
    msg_count: np.ndarray
    settle_qty: dict = field(default_factory=dict)
    day_label: str = ""
    family: str = "market"
    discarded: int = 0

    @property
    def messages(self) -> int:
        return int(self.msg_count.sum()) + self.discarded

    def __eq__(self, other):
        if not isinstance(other, DailyAggregate):
            return NotImplemented
        return (
            self.grid == other.grid
            and np.array_equal(self.dollar, other.dollar)
            and np.array_equal(self.msg_count, other.msg_count)
            and self.settle_qty == other.settle_qty
            and (self.day_label, self.family, self.discarded)
            == (other.day_label, other.family, other.discarded)
        )


@dataclass(eq=False)
class Fingerprint:
    cells: np.ndarray
    day_label: str = ""
    family: str = "market"
    mode: str = "time_price"

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.cells.shape != (FP_SIZE, FP_SIZE):
            raise ValueError(f"fingerprint must be {FP_SIZE}x{FP_SIZE}, got {self.cells.shape}")
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")

    def __eq__(self, other):
        if not isinstance(other, Fingerprint):
            return NotImplemented
        return (self.day_label, self.family, self.mode) == (
            other.day_label,
            other.family,
            other.mode,
        ) and np.array_equal(self.cells, other.cells)


def dollar_imbalance(reference_price, imbalance_qty, settle_qty=0):
    """Absolute dollar value of the unsettled imbalance.

    Exact for :class:`~decimal.Decimal` prices:

    >>> dollar_imbalance(Decimal("66.21"), 1141, 0)
    Decimal('75545.61')
    """
    if reference_price < 0:
        raise ValueError("reference price must be nonnegative")
    return abs(reference_price * (imbalance_qty - settle_qty))


def log1p_transform(x):
    if np.any(np.asarray(x) < 0):
        raise ValueError("log1p_transform is defined for nonnegative input only")
    if np.isscalar(x) or isinstance(x, Decimal):
        return math.log1p(float(x))
    return np.log1p(np.asarray(x, dtype=np.float64))


def resolve_settle(times, quantities, symbols, cutoff: int) -> dict:
    """Last total imbalance per symbol at or after ``cutoff``."""
    settle = {}
    for t, q, s in zip(times, quantities, symbols):
        if t >= cutoff:
            settle[s] = int(q)
    return settle


def _aggregate_arrays(times, prices, qty, sym_codes, symbols, grid, settle, family, day_label):
    settle_by_code = np.array([settle.get(s, 0) for s in symbols], dtype=np.int64)
    if len(symbols) == 0:
        settle_by_code = np.zeros(1, dtype=np.int64)
    time_idx = grid.time_bin(times)
    price_idx = grid.price_bin(prices)
    dollars = np.abs(prices * (qty - settle_by_code[sym_codes]).astype(np.float64))
    dollar, counts = kernels.accumulate(time_idx, price_idx, dollars, grid.n_time_bins, grid.n_prices)
    used = {symbols[c] for c in np.unique(sym_codes)} if len(sym_codes) else set()
    return DailyAggregate(
        grid=grid,
        dollar=dollar,
        msg_count=counts,
        settle_qty={s: q for s, q in settle.items() if s in used},
        day_label=day_label,
        family=family,
        discarded=int(np.count_nonzero(time_idx < 0)),
    )


def _columns(messages: Iterable):
    times, prices, qty, codes = [], [], [], []
    symbols, index = [], {}
    for m in messages:
        if not isinstance(m, ImbalanceMessage):
            continue
        code = index.get(m.symbol)
        if code is None:
            code = index[m.symbol] = len(symbols)
            symbols.append(m.symbol)
        times.append(m.source_time)
        prices.append(float(m.reference_price))
        qty.append(m.total_imbalance_qty)
        codes.append(code)
    return (
        np.array(times, dtype=np.int64),
        np.array(prices, dtype=np.float64),
        np.array(qty, dtype=np.int64),
        np.array(codes, dtype=np.int64),
        symbols,
    )


def aggregate_day(
    messages: Iterable,
    grid: BinGrid | None = None,
    family: str = "market",
    day_label: str = "",
    settle: Mapping[str, int] | None = None,
) -> DailyAggregate:
    """Fold one day's type-105 messages into the time x price dollar grid.

    Non-imbalance records are ignored. When ``grid`` carries no price range it
    is taken from the in-session messages. ``settle`` defaults to the last
    imbalance quantity per symbol at or after the session end.
    """
    grid = grid or BinGrid()
    times, prices, qty, codes, symbols = _columns(messages)
    if grid.price_max <= 0:
        inside = grid.time_bin(times) >= 0
        grid = grid.with_price_range(prices[inside])
    if settle is None:
        settle = resolve_settle(times, qty, (symbols[c] for c in codes), grid.session_end)
    return _aggregate_arrays(times, prices, qty, codes, symbols, grid, settle, family, day_label)


def aggregate_buffer(data: bytes, universe, grid: BinGrid | None = None, day_label: str = ""):
    """Fast columnar route: raw feed bytes to (market, etf) aggregates.

    Produces the same aggregates as parsing every line and calling
    :func:`aggregate_day` on the full and ETF-only streams with a shared grid.
    Returns ``(market, etf, (lines, ok_105, bad_105))``.
    """
    grid = grid or BinGrid()
    times, prices, qty, codes, symbols, counts = kernels.scan_imbalances(data)
    codes = codes.astype(np.int64)
    if grid.price_max <= 0:
        grid = grid.with_price_range(prices[grid.time_bin(times) >= 0])
    settle = resolve_settle(times.tolist(), qty.tolist(), (symbols[c] for c in codes.tolist()), grid.session_end)
    market = _aggregate_arrays(times, prices, qty, codes, symbols, grid, settle, "market", day_label)

    etf_code = np.array([s in universe for s in symbols] or [False], dtype=bool)
    mask = etf_code[codes] if len(codes) else np.zeros(0, dtype=bool)
    # re-code ETF symbols so symbol ordering matches first appearance in the ETF stream
    e_codes = codes[mask]
    e_symbols, remap = [], {}
    new_codes = np.empty(len(e_codes), dtype=np.int64)
    for i, c in enumerate(e_codes.tolist()):
        if c not in remap:
            remap[c] = len(e_symbols)
            e_symbols.append(symbols[c])
        new_codes[i] = remap[c]
    etf = _aggregate_arrays(
        times[mask], prices[mask], qty[mask], new_codes, e_symbols, grid, settle, "etf", day_label
    )
    return market, etf, counts


def day_aggregates(messages, universe, grid: BinGrid | None = None, day_label: str = ""):
    """Object route: (market, etf) aggregates sharing the full day's price grid."""
    from .etf import partition

    market_msgs, etf_msgs = partition(messages, universe)
    market = aggregate_day(market_msgs, grid, "market", day_label)
    etf = aggregate_day(etf_msgs, market.grid, "etf", day_label, settle=_all_settle(market_msgs, market.grid))
    return market, etf


def _all_settle(messages, grid):
    times, _, qty, codes, symbols = _columns(messages)
    return resolve_settle(times, qty, (symbols[c] for c in codes), grid.session_end)


def overlap_weights(src_edges, dst_edges) -> np.ndarray:
    """Fraction of each source interval falling into each destination interval.

    Returns a ``(len(dst)-1, len(src)-1)`` matrix whose columns sum to one.
    """
    src = np.asarray(src_edges, dtype=np.float64)
    dst = np.asarray(dst_edges, dtype=np.float64)
    lo = np.maximum(dst[:-1, None], src[None, :-1])
    hi = np.minimum(dst[1:, None], src[None, 1:])
    width = src[1:] - src[:-1]
    return np.clip(hi - lo, 0.0, None) / width[None, :]


def time_edges(n_time: int, warp: str = "log") -> np.ndarray:
    edges = np.arange(n_time + 1, dtype=np.float64)
    if warp == "log":
        return np.log1p(edges)
    if warp == "none":
        return edges
    raise ValueError(f"unknown time warp {warp!r}")


def rebin(matrix: np.ndarray, row_edges, col_edges, size: int = FP_SIZE) -> np.ndarray:
    """Area-weighted box rebinning of ``matrix`` onto a ``size x size`` grid."""
    row_edges = np.asarray(row_edges, dtype=np.float64)
    col_edges = np.asarray(col_edges, dtype=np.float64)
    w_rows = overlap_weights(row_edges, np.linspace(row_edges[0], row_edges[-1], size + 1))
    w_cols = overlap_weights(col_edges, np.linspace(col_edges[0], col_edges[-1], size + 1))
    return w_rows @ matrix @ w_cols.T


@dataclass(frozen=True)
class StateHistRange:
    log_count_max: float = math.log1p(1e6)
    log_dollar_max: float = math.log1p(1e12)


def build_fingerprint(
    agg: DailyAggregate,
    mode: str = "time_price",
    time_warp: str = "log",
    hist_range: StateHistRange = StateHistRange(),
) -> Fingerprint:
    """Compress a daily aggregate to a 96x96 fingerprint.

    ``time_price``: log1p of every dollar cell, time axis warped by log1p of
    the bin index, then box rebinned. ``state_hist``: 2-D histogram of
    per-interval (log1p count, log1p dollar) pairs with log1p frequencies.
    """
    if mode == "time_price":
        values = np.log1p(agg.dollar)
        n_time, n_price = values.shape
        cells = rebin(values, time_edges(n_time, time_warp), np.arange(n_price + 1.0))
    elif mode == "state_hist":
        x = np.log1p(agg.msg_count.astype(np.float64))
        y = np.log1p(agg.dollar.sum(axis=1))
        ix = np.minimum(np.floor(x / hist_range.log_count_max * FP_SIZE), FP_SIZE - 1).astype(np.int64)
        iy = np.minimum(np.floor(y / hist_range.log_dollar_max * FP_SIZE), FP_SIZE - 1).astype(np.int64)
        freq = np.zeros((FP_SIZE, FP_SIZE), dtype=np.float64)
        np.add.at(freq, (ix, iy), 1.0)
        cells = np.log1p(freq)
    else:
        raise ValueError(f"unknown fingerprint mode {mode!r}")
    # rebinning weights are nonnegative; clip guards -0.0 only
    cells = np.maximum(cells, 0.0)
    return Fingerprint(cells, agg.day_label, agg.family, mode)


class FingerprintFormatError(ValueError):
    pass


def _header(fp: Fingerprint) -> str:
    return (
        f"FPRINT {FP_VERSION} rows={FP_SIZE} cols={FP_SIZE} "
        f"day={fp.day_label or '-'} family={fp.family} mode={fp.mode}"
    )


def dumps_fingerprint(fp: Fingerprint) -> str:
    """Text form: header line plus 96 rows of shortest round-trip decimals."""
    rows = [" ".join(repr(float(v)) for v in row) for row in fp.cells]
    return "\n".join([_header(fp), *rows]) + "\n"


def parse_header(line: str) -> dict:
    parts = line.split()
    if len(parts) < 2 or parts[0] != "FPRINT":
        raise FingerprintFormatError(f"not a fingerprint file header: {line[:40]!r}")
    if parts[1] != str(FP_VERSION):
        raise FingerprintFormatError(f"unsupported fingerprint version {parts[1]}, expected {FP_VERSION}")
    meta = {}
    for item in parts[2:]:
        key, sep, value = item.partition("=")
        if not sep:
            raise FingerprintFormatError(f"bad header item {item!r}")
        meta[key] = value
    for key in ("rows", "cols", "day", "family", "mode"):
        if key not in meta:
            raise FingerprintFormatError(f"header missing {key}")
    meta["rows"] = int(meta["rows"])
    meta["cols"] = int(meta["cols"])
    if (meta["rows"], meta["cols"]) != (FP_SIZE, FP_SIZE):
        raise FingerprintFormatError(
            f"dimension mismatch: expected {FP_SIZE}x{FP_SIZE}, found {meta['rows']}x{meta['cols']}"
        )
    return meta


def loads_fingerprint(text: str) -> Fingerprint:
    lines = text.splitlines()
    if not lines:
        raise FingerprintFormatError("empty fingerprint file")
    meta = parse_header(lines[0])
    rows = [ln for ln in lines[1:] if ln.strip()]
    if len(rows) != meta["rows"]:
        raise FingerprintFormatError(f"expected {meta['rows']} rows, found {len(rows)}")
    cells = np.empty((FP_SIZE, FP_SIZE), dtype=np.float64)
    for i, row in enumerate(rows):
        values = row.split()
        if len(values) != meta["cols"]:
            raise FingerprintFormatError(f"row {i}: expected {meta['cols']} columns, found {len(values)}")
        cells[i] = [float(v) for v in values]
    day = "" if meta["day"] == "-" else meta["day"]
    try:
        return Fingerprint(cells, day, meta["family"], meta["mode"])
    except ValueError as exc:
        raise FingerprintFormatError(str(exc)) from exc


def write_fingerprint(fp: Fingerprint, sink) -> None:
    text = dumps_fingerprint(fp)
    if isinstance(sink, (str, os.PathLike)):
        with open(sink, "w", encoding="ascii") as fh:
            fh.write(text)
    else:
        sink.write(text)


def read_fingerprint(source) -> Fingerprint:
    if isinstance(source, (str, os.PathLike)):
        with open(source, encoding="ascii") as fh:
            return loads_fingerprint(fh.read())
    if isinstance(source, io.TextIOBase) or hasattr(source, "read"):
        return loads_fingerprint(source.read())
    raise TypeError("source must be a path or a readable text stream")


def write_pgm(cells: np.ndarray, path, vmax: float | None = None) -> None:
    """Binary 8-bit PGM (P5) scaled linearly from 0 to ``vmax``."""
    cells = np.asarray(cells, dtype=np.float64)
    top = float(cells.max()) if vmax is None else vmax
    scaled = np.zeros(cells.shape) if top <= 0 else np.clip(cells / top, 0.0, 1.0) * 255.0
    data = np.round(scaled).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def summary_rows(market: DailyAggregate, etf: DailyAggregate) -> list[dict]:
    """Per time bin message counts and dollar sums for both families."""
    width = market.grid.time_bin_width
    m_dollar = market.dollar.sum(axis=1)
    e_dollar = etf.dollar.sum(axis=1)
    return [
        {
            "bin": i,
            "start_seconds": i * width,
            "market_msgs": int(market.msg_count[i]),
            "etf_msgs": int(etf.msg_count[i]),
            "market_dollar": float(m_dollar[i]),
            "etf_dollar": float(e_dollar[i]),
        }
        for i in range(market.grid.n_time_bins)
    ]


def day_totals(market: DailyAggregate, etf: DailyAggregate) -> dict:
    m_msgs = int(market.msg_count.sum())
    e_msgs = int(etf.msg_count.sum())
    m_dollar = float(market.dollar.sum())
    e_dollar = float(etf.dollar.sum())
    return {
        "market_msgs": m_msgs,
        "etf_msgs": e_msgs,
        "etf_msg_share": e_msgs / m_msgs if m_msgs else 0.0,
        "market_dollar": m_dollar,
        "etf_dollar": e_dollar,
        "etf_dollar_share": e_dollar / m_dollar if m_dollar else 0.0,
    }
