"""Training/testing pool composition (market:ETF mixes tr1..tr5, tes1..tes5)."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class MixSpec:
    label: str
    market_fraction: Fraction
    etf_fraction: Fraction

    def __post_init__(self):
        if self.market_fraction + self.etf_fraction != 1:
            raise ValueError(f"{self.label}: fractions must sum to 1")
        if not 0 <= self.market_fraction <= 1:
            raise ValueError(f"{self.label}: fraction outside [0, 1]")

    def counts(self, pool_size: int) -> tuple[int, int]:
        """(market, etf) member counts; market count rounds half away from zero."""
        exact = self.market_fraction * pool_size
        n_market = math.floor(exact + Fraction(1, 2))
        return n_market, pool_size - n_market


def _mix(label, market_pct):
    return MixSpec(label, Fraction(market_pct, 100), Fraction(100 - market_pct, 100))


_STANDARD = (
    _mix("tr1", 100),
    _mix("tr2", 80),
    _mix("tr3", 60),
    _mix("tr4", 40),
    _mix("tr5", 20),
    _mix("tes1", 0),
    _mix("tes2", 20),
    _mix("tes3", 40),
    _mix("tes4", 60),
    _mix("tes5", 80),
)

TRAIN_LABELS = tuple(m.label for m in _STANDARD[:5])
TEST_LABELS = tuple(m.label for m in _STANDARD[5:])


def standard_mixes() -> tuple[MixSpec, ...]:
    return _STANDARD


def mix(label: str) -> MixSpec:
    for m in _STANDARD:
        if m.label == label:
            return m
    raise KeyError(label)


def mirror_label(label: str) -> str:
    """tr_k <-> tes_k: the rows whose compositions swap market and ETF."""
    if label.startswith("tes"):
        return "tr" + label[3:]
    if label.startswith("tr"):
        return "tes" + label[2:]
    raise KeyError(label)


class PoolCapacityError(ValueError):
    pass


@dataclass(frozen=True)
class SamplePool:
    spec: MixSpec
    members: tuple  # Fingerprint instances, market members first drawn per the seed

    @property
    def composition(self) -> dict:
        out = {"market": 0, "etf": 0}
        for m in self.members:
            out[m.family] += 1
        return out

    @property
    def label(self) -> str:
        return self.spec.label


def rng_for(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator keyed by ``(seed, *key)`` through ``SeedSequence``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, *key])))


def build_pool(
    spec: MixSpec,
    market_days: Sequence,
    etf_days: Sequence,
    pool_size: int = 5,
    seed: int = 0,
    first_day: str | None = None,
) -> SamplePool:
    """Seeded draw without replacement honouring ``spec``'s composition.

    With ``first_day`` the first member is pinned to that day: the market
    fingerprint for training labels, the ETF fingerprint for testing labels.
    That pins tr_k and tes_k to mirrored first samples.
    """
    n_market, n_etf = spec.counts(pool_size)
    if n_market > len(market_days) or n_etf > len(etf_days):
        raise PoolCapacityError(
            f"{spec.label}: need {n_market} market + {n_etf} etf fingerprints, "
            f"have {len(market_days)} + {len(etf_days)}"
        )
    key = int.from_bytes(spec.label.encode(), "big") % (2**32)
    rng = rng_for(seed, key)
    market_pick = list(rng.permutation(len(market_days))[:n_market])
    etf_pick = list(rng.permutation(len(etf_days))[:n_etf])
    members = [market_days[i] for i in market_pick] + [etf_days[i] for i in etf_pick]

    if first_day is not None:
        family = "etf" if spec.label.startswith("tes") else "market"
        if (n_etf if family == "etf" else n_market) == 0:
            family = "market" if family == "etf" else "etf"
        source = etf_days if family == "etf" else market_days
        pinned = next((fp for fp in source if fp.day_label == first_day), None)
        if pinned is None:
            raise PoolCapacityError(f"{spec.label}: no {family} fingerprint for day {first_day}")
        idx = next((i for i, m in enumerate(members) if m is pinned), None)
        if idx is None:
            # swap the pinned day in for the last drawn member of its family
            idx = [i for i, m in enumerate(members) if m.family == family][-1]
            members[idx] = pinned
        members.insert(0, members.pop(idx))
    return SamplePool(spec, tuple(members))


def build_standard_pools(market_days, etf_days, pool_size: int = 5, seed: int = 0) -> dict:
    """All ten pools; tr_k and tes_k share the day of their first member."""
    days = sorted({fp.day_label for fp in market_days} & {fp.day_label for fp in etf_days})
    if not days:
        raise PoolCapacityError("no day has both a market and an ETF fingerprint")
    pools = {}
    for k, label in enumerate(TRAIN_LABELS):
        day = days[k % len(days)]
        for lab in (label, mirror_label(label)):
            pools[lab] = build_pool(mix(lab), market_days, etf_days, pool_size, seed, first_day=day)
    return {m.label: pools[m.label] for m in _STANDARD}


MANIFEST_FIELDS = ("pool_label", "member_index", "day", "family", "fingerprint_path")


def write_manifest(path, pools: dict, paths: dict) -> None:
    """``paths`` maps ``(day, family)`` to the fingerprint file path."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(MANIFEST_FIELDS)
        for label, pool in pools.items():
            for i, fp in enumerate(pool.members):
                w.writerow([label, i, fp.day_label, fp.family, paths[(fp.day_label, fp.family)]])


def read_manifest(path) -> dict[str, list[dict]]:
    """Pool label to its ordered member rows."""
    pools: dict[str, list[dict]] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: manifest missing columns {sorted(missing)}")
        for row in reader:
            row["member_index"] = int(row["member_index"])
            pools.setdefault(row["pool_label"], []).append(row)
    for rows in pools.values():
        rows.sort(key=lambda r: r["member_index"])
    return pools
