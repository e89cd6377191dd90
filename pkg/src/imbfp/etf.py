"""ETF universe from a security name list, and the market/ETF stream split."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Sequence

_FUND_WORD = re.compile(r"\bfund\b", re.IGNORECASE)
_EXCHANGE_TRADED = re.compile(r"exchange\s+traded", re.IGNORECASE)


class NameListEntry(NamedTuple):
    symbol: str
    long_name: str


@dataclass(frozen=True)
class SymbolUniverse:
    etf_symbols: frozenset[str]
    total_entries: int
    duplicates: int = 0

    def __contains__(self, symbol: str) -> bool:
        return symbol.strip().upper() in self.etf_symbols

    def __len__(self) -> int:
        return len(self.etf_symbols)


def is_etf_name(long_name: str) -> bool:
    """True for names containing "exchange traded" or the word "fund".

    Hyphens count as spaces, so "EXCHANGE-TRADED" matches; "REFUNDING" does not.
    """
    name = long_name.replace("-", " ")
    return bool(_EXCHANGE_TRADED.search(name) or _FUND_WORD.search(name))


def build_universe(entries: Iterable[NameListEntry | tuple[str, str]]) -> SymbolUniverse:
    seen = set()
    etfs = set()
    duplicates = 0
    for symbol, long_name in entries:
        key = symbol.strip().upper()
        if not key:
            raise ValueError("name list entry with empty symbol")
        if key in seen:
            duplicates += 1
            continue
        seen.add(key)
        if is_etf_name(long_name):
            etfs.add(key)
    return SymbolUniverse(frozenset(etfs), len(seen), duplicates)


def read_name_list(path, delimiter: str = "|") -> list[NameListEntry]:
    entries = []
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            symbol, sep, name = line.partition(delimiter)
            if not sep:
                raise ValueError(f"{path}:{line_no}: missing {delimiter!r} delimiter")
            entries.append(NameListEntry(symbol.strip(), name.strip()))
    return entries


def write_name_list(path, entries: Iterable[tuple[str, str]], delimiter: str = "|") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for symbol, name in entries:
            fh.write(f"{symbol}{delimiter}{name}\n")


def partition(messages: Sequence, universe: SymbolUniverse) -> tuple[list, list]:
    """Split a stream into (all messages, ETF-only messages); order is kept.

    Records without a symbol (unrecognized lines) stay in the market stream only.
    """
    market = list(messages)
    etf = [m for m in market if getattr(m, "symbol", None) is not None and m.symbol in universe]
    return market, etf
