"""Synthetic TAQ-format imbalance days with known ground truth.

Messages arrive in three clusters (session open, midday, close; the close is
heaviest). ETF symbols carry names the ETF classifier accepts and produce a
configured share of the messages and of the dollar imbalance.
"""

from __future__ import annotations

import datetime as dt
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .feed import format_nanotime, parse_nanotime

SESSION_START = parse_nanotime("03:30:00.0")
SESSION_END = parse_nanotime("16:00:00.0")
NOON = parse_nanotime("12:00:00.0")
OPEN_AUCTION = parse_nanotime("09:30:00.0")
NS = 1_000_000_000

_STOCK_SUFFIXES = ("HOLDINGS CORP", "INC", "GROUP INC", "BANCORP", "TECHNOLOGIES INC", "REFUNDING CORP", "FUNDAMENTAL SYSTEMS INC")
_ETF_NAMES = ("EXCHANGE TRADED FUND", "SECTOR FUND", "BOND INDEX FUND", "EXCHANGE-TRADED TRUST", "EQUITY ETF FUND")


class SynthConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_symbols: int = 8000
    etf_symbol_fraction: float = 0.1326
    total_messages: int = 100_000
    # open / midday / close cluster weights and a flat floor
    cluster_weights: tuple[float, float, float] = (0.3, 0.2, 0.5)
    floor_weight: float = 0.05
    open_scale_s: float = 2400.0
    midday_sd_s: float = 1800.0
    close_scale_s: float = 1800.0
    peak_to_mean_cap: float = 22.0
    etf_message_share: float = 0.125
    etf_dollar_share: float = 0.60
    price_log_mean: float = math.log(40.0)
    price_log_sd: float = 0.8
    qty_pareto_shape: float = 2.5
    qty_scale: float = 400.0
    settle_clear_probability: float = 0.99
    status_messages: int = 16
    fault_fraction: float = 0.0
    time_bin_width_s: int = 100

    def validate(self):
        for name in ("etf_symbol_fraction", "etf_message_share", "etf_dollar_share"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise SynthConfigError(f"{name} must lie in (0, 1), got {v}")
        if self.total_messages < 0:
            raise SynthConfigError("total_messages must be >= 0")
        if self.n_symbols < 2:
            raise SynthConfigError("need at least two symbols")
        n_etf = round(self.n_symbols * self.etf_symbol_fraction)
        if not 1 <= n_etf < self.n_symbols:
            raise SynthConfigError(
                f"etf_symbol_fraction {self.etf_symbol_fraction} leaves no ETF or no stock symbols"
            )
        if min(self.cluster_weights) < 0 or self.floor_weight < 0 or sum(self.cluster_weights) + self.floor_weight <= 0:
            raise SynthConfigError("intensity weights must be nonnegative with positive sum")
        if not 0 <= self.fault_fraction < 1:
            raise SynthConfigError("fault_fraction must lie in [0, 1)")
        if not 0 <= self.settle_clear_probability <= 1:
            raise SynthConfigError("settle_clear_probability must lie in [0, 1]")


@dataclass
class SynthDay:
    lines: list[str]
    names: list[tuple[str, str]]
    truth: dict = field(default_factory=dict)

    def text(self) -> str:
        return "\n".join(self.lines) + "\n" if self.lines else ""

    def write(self, path) -> None:
        with open(path, "w", encoding="ascii") as fh:
            fh.write(self.text())

    def write_truth(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.truth, fh, indent=1, sort_keys=True)


def ticker(i: int) -> str:
    """Distinct 3-4 letter ticker for each nonnegative index."""
    letters = []
    i += 26 * 26  # skip the one- and two-letter range
    while True:
        i, r = divmod(i, 26)
        letters.append(chr(65 + r))
        if i == 0:
            break
    return "".join(reversed(letters))


def intensity(cfg: SynthConfig, grid_s: np.ndarray) -> np.ndarray:
    """Unnormalised message density on a grid of seconds since session start."""
    length = (SESSION_END - SESSION_START) / NS
    w_open, w_mid, w_close = cfg.cluster_weights
    open_c = np.exp(-grid_s / cfg.open_scale_s) / cfg.open_scale_s
    close_c = np.exp(-(length - grid_s) / cfg.close_scale_s) / cfg.close_scale_s
    noon = (NOON - SESSION_START) / NS
    mid_c = np.exp(-0.5 * ((grid_s - noon) / cfg.midday_sd_s) ** 2) / (cfg.midday_sd_s * math.sqrt(2 * math.pi))
    dens = w_open * open_c + w_mid * mid_c + w_close * close_c + cfg.floor_weight / length
    cap = cfg.peak_to_mean_cap * dens.mean()
    return np.minimum(dens, cap)


def draw_times(cfg: SynthConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Sorted nanosecond timestamps inside [session start, session end)."""
    n_sec = (SESSION_END - SESSION_START) // NS
    dens = intensity(cfg, np.arange(n_sec) + 0.5)
    secs = rng.choice(n_sec, size=n, p=dens / dens.sum())
    frac = rng.integers(0, NS, size=n)
    return np.sort(SESSION_START + secs.astype(np.int64) * NS + frac)


def _names(rng, n_symbols, n_etf):
    etf_idx = set(rng.choice(n_symbols, size=n_etf, replace=False).tolist())
    names = []
    for i in range(n_symbols):
        sym = ticker(i)
        if i in etf_idx:
            names.append((sym, f"{sym} {_ETF_NAMES[i % len(_ETF_NAMES)]}"))
        else:
            names.append((sym, f"{sym} {_STOCK_SUFFIXES[i % len(_STOCK_SUFFIXES)]}"))
    return names, np.array(sorted(etf_idx), dtype=np.int64)


def generate_day(cfg: SynthConfig = SynthConfig(), day: dt.date | str = "2019-10-07") -> SynthDay:
    cfg.validate()
    day = dt.date.fromisoformat(day) if isinstance(day, str) else day
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence([cfg.seed, day.toordinal()])))

    n_sym = cfg.n_symbols
    n_etf_sym = round(n_sym * cfg.etf_symbol_fraction)
    names, etf_idx = _names(rng, n_sym, n_etf_sym)
    is_etf = np.zeros(n_sym, dtype=bool)
    is_etf[etf_idx] = True
    stock_idx = np.flatnonzero(~is_etf)
    symbols = [s for s, _ in names]
    sym_price = np.exp(rng.normal(cfg.price_log_mean, cfg.price_log_sd, size=n_sym))

    n = cfg.total_messages
    n_etf = round(n * cfg.etf_message_share)
    times = draw_times(cfg, rng, n)
    msg_is_etf = np.zeros(n, dtype=bool)
    msg_is_etf[rng.permutation(n)[:n_etf]] = True
    activity = rng.lognormal(0.0, 1.0, size=n_sym)
    sym = np.empty(n, dtype=np.int64)
    for mask, pool in ((msg_is_etf, etf_idx), (~msg_is_etf, stock_idx)):
        w = activity[pool] / activity[pool].sum()
        sym[mask] = rng.choice(pool, size=int(mask.sum()), p=w)

    prices = np.maximum(np.round(sym_price[sym] * (1 + rng.uniform(-0.005, 0.005, size=n)), 2), 0.01)
    raw_qty = np.floor(cfg.qty_scale * (rng.pareto(cfg.qty_pareto_shape, size=n) + 0.05)).astype(np.int64) + 1
    uncleared = rng.random(n_sym) >= cfg.settle_clear_probability
    raw_settle = np.where(uncleared, np.floor(cfg.qty_scale * rng.pareto(cfg.qty_pareto_shape, size=n_sym)).astype(np.int64) + 1, 0)
    # only symbols that actually trade get a settlement record
    traded = np.zeros(n_sym, dtype=bool)
    traded[sym] = True
    raw_settle[~traded] = 0

    qty, settle = raw_qty.copy(), raw_settle.copy()
    if n_etf and n - n_etf:
        raw_dollars = np.abs(prices * (raw_qty - raw_settle[sym]))
        d_etf = raw_dollars[msg_is_etf].sum()
        d_stock = raw_dollars[~msg_is_etf].sum()
        s = cfg.etf_dollar_share
        if d_etf <= 0:
            raise SynthConfigError("etf_dollar_share infeasible: ETF imbalances are all zero")
        k = s * d_stock / ((1 - s) * d_etf)
        qty = np.where(msg_is_etf, np.round(raw_qty * k), raw_qty).astype(np.int64)
        settle = np.where(is_etf, np.round(raw_settle * k), raw_settle).astype(np.int64)
        if not qty[msg_is_etf].any():
            raise SynthConfigError(
                f"etf_dollar_share {s} infeasible: ETF quantity scale {k:.3g} rounds every ETF imbalance to 0"
            )
        if qty.max() >= 10**18:
            raise SynthConfigError(f"etf_dollar_share {s} infeasible: ETF quantity scale {k:.3g} overflows")

    lines = []
    seq = 0
    for i, s_ in enumerate(symbols):
        seq += 1
        lines.append(f"3,{seq},{s_},{i + 1},51,N,C,100,{sym_price[i]:.2f},0,0,N,.0001,1")

    n_status = min(cfg.status_messages, n) if n else 0
    status_at = np.sort(rng.choice(n, size=n_status, replace=False)) if n_status else np.zeros(0, dtype=np.int64)
    status_sym = rng.integers(0, n_sym, size=n_status)
    status_code = rng.choice(np.array(list("3PH")), size=n_status)

    paired = rng.integers(0, 5000, size=n)
    sides = rng.choice(np.array(["B", "S"]), size=n)
    sym_seq = np.zeros(n_sym, dtype=np.int64)
    status_ptr = 0
    body = []
    for j in range(n):
        while status_ptr < n_status and status_at[status_ptr] == j:
            body.append(("34", int(times[j]), int(status_sym[status_ptr]), str(status_code[status_ptr])))
            status_ptr += 1
        body.append(("105", int(times[j]), j, None))

    for kind, t, ref, extra in body:
        seq += 1
        if kind == "34":
            sym_seq[ref] += 1
            lines.append(f"34,{seq},{format_nanotime(t)},{symbols[ref]},{sym_seq[ref]},{extra},~, , , , , ~,P")
            continue
        i_sym = int(sym[ref])
        sym_seq[i_sym] += 1
        a_type, a_time = ("M", "0930") if t < NOON else ("C", "1600")
        clearing = f"{prices[ref] * 1.01:.2f}" if a_type == "M" else "0"
        lines.append(
            f"105,{seq},{format_nanotime(t)},{symbols[i_sym]},{sym_seq[i_sym]},{prices[ref]:.2f},"
            f"{paired[ref]},{qty[ref]},0,{a_time},{a_type},{sides[ref]},{clearing},0,0,0,0,0,0,0,0,0, ,"
        )

    settle_syms = np.flatnonzero(settle > 0)
    for i_sym in settle_syms:
        seq += 1
        sym_seq[i_sym] += 1
        lines.append(
            f"105,{seq},{format_nanotime(SESSION_END)},{symbols[i_sym]},{sym_seq[i_sym]},{sym_price[i_sym]:.2f},"
            f"0,{settle[i_sym]},0,1600,C,B,0,0,0,0,0,0,0,0,0,0, ,"
        )

    n_fault = 0
    if cfg.fault_fraction > 0 and lines:
        n_fault = int(round(len(lines) * cfg.fault_fraction))
        bad_kinds = ("105,x", "105,1,25:00:00.0,ABC", "", "999,1,2", "105,1,09:30:00.1,ABC,1,-1,0,0,0,0930,M,B,0,0,0", "garbage\x7f")
        at = np.sort(rng.integers(0, len(lines) + 1, size=n_fault))[::-1]
        for pos in at:
            lines.insert(int(pos), bad_kinds[int(rng.integers(0, len(bad_kinds)))])

    truth = _truth(cfg, day, times, prices, qty, sym, msg_is_etf, settle, symbols, is_etf, len(names), n_status, len(settle_syms), n_fault)
    return SynthDay(lines, names, truth)


def _truth(cfg, day, times, prices, qty, sym, msg_is_etf, settle, symbols, is_etf, n_map, n_status, n_settle, n_fault):
    width = cfg.time_bin_width_s * NS
    n_bins = -(-(SESSION_END - SESSION_START) // width)
    bins = (times - SESSION_START) // width
    market_counts = np.bincount(bins, minlength=n_bins)
    etf_counts = np.bincount(bins[msg_is_etf], minlength=n_bins)
    dollars = np.abs(prices * (qty - settle[sym]).astype(np.float64))
    return {
        "day": day.isoformat(),
        "seed": cfg.seed,
        "config": {k: (list(v) if isinstance(v, tuple) else v) for k, v in asdict(cfg).items()},
        "type3": n_map,
        "type34": n_status,
        "type105": int(len(times)) + n_settle,
        "type105_in_session": int(len(times)),
        "settle_records": n_settle,
        "fault_lines": n_fault,
        "etf_symbols": int(is_etf.sum()),
        "market_messages": int(len(times)),
        "etf_messages": int(msg_is_etf.sum()),
        "market_bin_counts": market_counts.tolist(),
        "etf_bin_counts": etf_counts.tolist(),
        "market_dollar": math.fsum(dollars.tolist()),
        "etf_dollar": math.fsum(dollars[msg_is_etf].tolist()),
        "settle_qty": {symbols[i]: int(settle[i]) for i in np.flatnonzero(settle > 0)},
    }
