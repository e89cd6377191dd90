"""Pure-Python versions of the hot kernels.

Behaviour is identical to the compiled ``_kernels`` extension; the test-suite
runs both and compares outputs element by element.
"""

import numpy as np

MAX_INT_DIGITS = 18
VALID_AUCTION_TYPES = frozenset("OMHCR")
VALID_SIDES = frozenset(("B", "S", "0", ""))

_DIGITS = frozenset("0123456789")


class NanoTimeError(ValueError):
    """Raised for a malformed ``HH:MM:SS.fffffffff`` literal."""


def _two_digits(part, name, limit):
    if len(part) != 2 or not set(part) <= _DIGITS:
        raise NanoTimeError(f"bad {name} component {part!r}")
    value = int(part)
    if value > limit:
        raise NanoTimeError(f"{name} out of range: {value}")
    return value


def parse_nanotime(text):
    """Nanoseconds since midnight for ``HH:MM:SS.f`` with 1-9 fraction digits."""
    head, dot, frac = text.partition(".")
    parts = head.split(":")
    if len(parts) != 3:
        raise NanoTimeError(f"expected HH:MM:SS, got {len(parts)} components")
    hh = _two_digits(parts[0], "hour", 23)
    mm = _two_digits(parts[1], "minute", 59)
    ss = _two_digits(parts[2], "second", 59)
    if not dot or not 1 <= len(frac) <= 9 or not set(frac) <= _DIGITS:
        raise NanoTimeError(f"bad fraction component {frac!r}")
    nanos = int(frac.ljust(9, "0"))
    return ((hh * 60 + mm) * 60 + ss) * 1_000_000_000 + nanos


def is_uint(field):
    return 0 < len(field) <= MAX_INT_DIGITS and set(field) <= _DIGITS


def is_udecimal(field):
    """Unsigned decimal: digits with at most one dot anywhere (".0001", "1." pass)."""
    whole, dot, frac = field.partition(".")
    if not whole and not frac:
        return False
    return set(whole) <= _DIGITS and set(frac) <= _DIGITS and len(whole) + len(frac) <= 30


def check_imbalance_fields(fields):
    """Index (1-based) of the first invalid field of a split type-105 line, or 0."""
    if len(fields) < 15:
        return len(fields) + 1
    try:
        parse_nanotime(fields[2])
    except NanoTimeError:
        return 3
    for i in (1, 4, 6, 7, 8):
        if not is_uint(fields[i]):
            return i + 1
    if not fields[3]:
        return 4
    for i in (5, 12, 13, 14):
        if not is_udecimal(fields[i]):
            return i + 1
    if fields[10].strip(" ") not in VALID_AUCTION_TYPES or len(fields[10].strip(" ")) != 1:
        return 11
    if fields[11].strip(" ") not in VALID_SIDES:
        return 12
    return 0


def scan_imbalances(data):
    """Columnar scan of type-105 records in a raw feed buffer.

    Returns ``(times, prices, total_imbalance, symbol_codes, symbols, counts)``
    where ``counts`` is ``(lines, ok_105, bad_105)``.
    """
    times, prices, imbs, codes = [], [], [], []
    symbols = []
    index = {}
    n_lines = n_ok = n_bad = 0
    for raw in data.split(b"\n"):
        if not raw:
            continue
        n_lines += 1
        if not (raw.startswith(b"105,") or raw.rstrip(b"\r") == b"105"):
            continue
        line = raw.rstrip(b"\r").decode("utf-8", errors="replace")
        fields = line.split(",")
        if check_imbalance_fields(fields):
            n_bad += 1
            continue
        n_ok += 1
        sym = fields[3]
        code = index.get(sym)
        if code is None:
            code = index[sym] = len(symbols)
            symbols.append(sym)
        times.append(parse_nanotime(fields[2]))
        prices.append(float(fields[5]))
        imbs.append(int(fields[7]))
        codes.append(code)
    return (
        np.array(times, dtype=np.int64),
        np.array(prices, dtype=np.float64),
        np.array(imbs, dtype=np.int64),
        np.array(codes, dtype=np.int32),
        symbols,
        (n_lines, n_ok, n_bad),
    )


def accumulate(time_idx, price_idx, dollars, n_time, n_price):
    """Sum dollars into a (n_time, n_price) grid; negative time indices are skipped."""
    time_idx = np.asarray(time_idx, dtype=np.int64)
    price_idx = np.asarray(price_idx, dtype=np.int64)
    dollars = np.asarray(dollars, dtype=np.float64)
    grid = np.zeros((n_time, n_price), dtype=np.float64)
    counts = np.zeros(n_time, dtype=np.int64)
    for t, p, d in zip(time_idx.tolist(), price_idx.tolist(), dollars.tolist()):
        if t < 0:
            continue
        grid[t, p] += d
        counts[t] += 1
    return grid, counts
