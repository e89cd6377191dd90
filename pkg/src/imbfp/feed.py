"""Parser for the TAQ NYSE Arca integrated-feed text dump.

Only message types 3 (symbol index mapping), 34 (security status) and
105 (imbalance) are decoded; every other line becomes :class:`Unrecognized`.
"""

from __future__ import annotations

import collections
from dataclasses import dataclass, field
from decimal import Decimal
from typing import BinaryIO, ClassVar, Iterator, Union

from . import kernels
from ._kernels_py import check_imbalance_fields, is_uint

NANOS_PER_DAY = 86_400 * 1_000_000_000

NanoTimeError = kernels.NanoTimeError


def parse_nanotime(text: str) -> int:
    """Nanoseconds since midnight for ``HH:MM:SS.fffffffff``.

    Fractions shorter than nine digits are right-padded with zeros.

    >>> parse_nanotime("00:24:58.796044288")
    1498796044288
    """
    return kernels.parse_nanotime(text)


def format_nanotime(nanos: int) -> str:
    if not 0 <= nanos < NANOS_PER_DAY:
        raise NanoTimeError(f"nanosecond value out of range: {nanos}")
    secs, frac = divmod(nanos, 1_000_000_000)
    hh, rem = divmod(secs, 3600)
    mm, ss = divmod(rem, 60)
    return f"{hh:02d}:{mm:02d}:{ss:02d}.{frac:09d}"


@dataclass(frozen=True)
class SymbolMapping:
    sequence_number: int
    symbol: str
    symbol_index: int
    market_id: int
    trailing_fields: tuple[str, ...] = ()
    msg_type: ClassVar[int] = 3


@dataclass(frozen=True)
class SecurityStatus:
    sequence_number: int
    source_time: int
    symbol: str
    symbol_seq_num: int
    security_status: str
    trailing_fields: tuple[str, ...] = ()
    msg_type: ClassVar[int] = 34


@dataclass(frozen=True)
class ImbalanceMessage:
    sequence_number: int
    source_time: int
    symbol: str
    symbol_seq_num: int
    reference_price: Decimal
    paired_qty: int
    total_imbalance_qty: int
    market_imbalance_qty: int
    auction_time: str
    auction_type: str
    imbalance_side: str
    continuous_book_clearing_price: Decimal = Decimal(0)
    closing_only_clearing_price: Decimal = Decimal(0)
    ssr_filing_price: Decimal = Decimal(0)
    trailing_fields: tuple[str, ...] = ()
    msg_type: ClassVar[int] = 105


@dataclass(frozen=True)
class Unrecognized:
    raw: str
    reason: str
    msg_type: ClassVar[None] = None


ParsedMessage = Union[SymbolMapping, SecurityStatus, ImbalanceMessage, Unrecognized]


def _parse_symbol_mapping(line, f):
    if len(f) < 5:
        return Unrecognized(line, f"bad field {len(f) + 1}")
    for i in (1, 3, 4):
        if not is_uint(f[i]):
            return Unrecognized(line, f"bad field {i + 1}")
    if not f[2]:
        return Unrecognized(line, "bad field 3")
    return SymbolMapping(int(f[1]), f[2], int(f[3]), int(f[4]), tuple(f[5:]))


def _parse_security_status(line, f):
    if len(f) < 6:
        return Unrecognized(line, f"bad field {len(f) + 1}")
    if not is_uint(f[1]):
        return Unrecognized(line, "bad field 2")
    try:
        t = parse_nanotime(f[2])
    except NanoTimeError:
        return Unrecognized(line, "bad field 3")
    if not f[3]:
        return Unrecognized(line, "bad field 4")
    if not is_uint(f[4]):
        return Unrecognized(line, "bad field 5")
    status = f[5].strip(" ")
    if len(status) != 1:
        return Unrecognized(line, "bad field 6")
    return SecurityStatus(int(f[1]), t, f[3], int(f[4]), status, tuple(f[6:]))


def _parse_imbalance(line, f):
    bad = check_imbalance_fields(f)
    if bad:
        return Unrecognized(line, f"bad field {bad}")
    side = f[11].strip(" ") or " "
    return ImbalanceMessage(
        sequence_number=int(f[1]),
        source_time=parse_nanotime(f[2]),
        symbol=f[3],
        symbol_seq_num=int(f[4]),
        reference_price=Decimal(f[5]),
        paired_qty=int(f[6]),
        total_imbalance_qty=int(f[7]),
        market_imbalance_qty=int(f[8]),
        auction_time=f[9],
        auction_type=f[10].strip(" "),
        imbalance_side=side,
        continuous_book_clearing_price=Decimal(f[12]),
        closing_only_clearing_price=Decimal(f[13]),
        ssr_filing_price=Decimal(f[14]),
        trailing_fields=tuple(f[15:]),
    )


_DISPATCH = {
    "3": _parse_symbol_mapping,
    "34": _parse_security_status,
    "105": _parse_imbalance,
}


def parse_line(line: str | bytes) -> ParsedMessage:
    """Decode one comma-separated record; never raises."""
    if isinstance(line, (bytes, bytearray)):
        line = bytes(line).decode("utf-8", errors="replace")
    line = line.rstrip("\r\n")
    if not line:
        return Unrecognized(line, "empty line")
    fields = line.split(",")
    kind = fields[0]
    if not is_uint(kind):
        return Unrecognized(line, "bad type")
    parser = _DISPATCH.get(kind)
    if parser is None:
        return Unrecognized(line, "unknown type")
    return parser(line, fields)


def _dec(value: Decimal) -> str:
    return format(value, "f")


def format_line(msg: ParsedMessage) -> str:
    """Render a record back to its comma-separated form."""
    if isinstance(msg, ImbalanceMessage):
        fields = [
            "105",
            str(msg.sequence_number),
            format_nanotime(msg.source_time),
            msg.symbol,
            str(msg.symbol_seq_num),
            _dec(msg.reference_price),
            str(msg.paired_qty),
            str(msg.total_imbalance_qty),
            str(msg.market_imbalance_qty),
            msg.auction_time,
            msg.auction_type,
            msg.imbalance_side,
            _dec(msg.continuous_book_clearing_price),
            _dec(msg.closing_only_clearing_price),
            _dec(msg.ssr_filing_price),
        ]
    elif isinstance(msg, SecurityStatus):
        fields = [
            "34",
            str(msg.sequence_number),
            format_nanotime(msg.source_time),
            msg.symbol,
            str(msg.symbol_seq_num),
            msg.security_status,
        ]
    elif isinstance(msg, SymbolMapping):
        fields = ["3", str(msg.sequence_number), msg.symbol, str(msg.symbol_index), str(msg.market_id)]
    elif isinstance(msg, Unrecognized):
        return msg.raw
    else:
        raise TypeError(f"not a feed record: {type(msg).__name__}")
    return ",".join(fields + list(msg.trailing_fields))


@dataclass
class ParseStats:
    lines: int = 0
    by_type: collections.Counter = field(default_factory=collections.Counter)
    errors: collections.Counter = field(default_factory=collections.Counter)

    def add(self, msg: ParsedMessage) -> None:
        self.lines += 1
        if isinstance(msg, Unrecognized):
            self.by_type["unrecognized"] += 1
            self.errors[msg.reason] += 1
        else:
            self.by_type[f"type{msg.msg_type}"] += 1

    def merge(self, other: "ParseStats") -> "ParseStats":
        return ParseStats(
            self.lines + other.lines, self.by_type + other.by_type, self.errors + other.errors
        )

    def to_text(self) -> str:
        """Flat ``key=value`` report, one pair per line."""
        out = [f"lines={self.lines}"]
        for key in ("type3", "type34", "type105", "unrecognized"):
            out.append(f"{key}={self.by_type.get(key, 0)}")
        for reason in sorted(self.errors):
            out.append(f"error.{reason.replace(' ', '_')}={self.errors[reason]}")
        return "\n".join(out) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ParseStats":
        stats = cls()
        for row in text.splitlines():
            if not row.strip():
                continue
            key, _, value = row.partition("=")
            if key == "lines":
                stats.lines = int(value)
            elif key.startswith("error."):
                stats.errors[key[6:].replace("_", " ")] = int(value)
            elif int(value):
                stats.by_type[key] = int(value)
        return stats


class FeedReadError(IOError):
    def __init__(self, last_good_line: int, cause: BaseException):
        super().__init__(f"read failed after line {last_good_line}: {cause}")
        self.last_good_line = last_good_line


class DayStream:
    """Lazy iterator over one day's records; ``stats`` fills as it is consumed."""

    def __init__(self, source: BinaryIO):
        self.source = source
        self.stats = ParseStats()

    def __iter__(self) -> Iterator[ParsedMessage]:
        line_no = 0
        while True:
            try:
                raw = self.source.readline()
            except OSError as exc:
                raise FeedReadError(line_no, exc) from exc
            if not raw:
                return
            line_no += 1
            msg = parse_line(raw)
            self.stats.add(msg)
            yield msg


def stream_day(source: BinaryIO) -> DayStream:
    return DayStream(source)


def read_day(path) -> tuple[list[ParsedMessage], ParseStats]:
    with open(path, "rb") as fh:
        stream = stream_day(fh)
        messages = list(stream)
    return messages, stream.stats
