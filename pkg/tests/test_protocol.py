from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from imbfp.fingerprint import Fingerprint
from imbfp.protocol import (
    TEST_LABELS,
    TRAIN_LABELS,
    MixSpec,
    PoolCapacityError,
    build_pool,
    build_standard_pools,
    mirror_label,
    mix,
    read_manifest,
    standard_mixes,
    write_manifest,
)

DAYS = ["2019-10-07", "2019-10-08", "2020-09-09", "2020-10-04", "2020-10-05"]
MIX_PERCENT = {
    "tr1": (100, 0), "tr2": (80, 20), "tr3": (60, 40), "tr4": (40, 60), "tr5": (20, 80),
    "tes1": (0, 100), "tes2": (20, 80), "tes3": (40, 60), "tes4": (60, 40), "tes5": (80, 20),
}


def _fps(family, days=DAYS):
    return [Fingerprint(np.full((96, 96), float(i)), d, family) for i, d in enumerate(days)]


MARKET, ETF = _fps("market"), _fps("etf")


def test_standard_mixes_table():
    mixes = standard_mixes()
    assert [m.label for m in mixes] == list(MIX_PERCENT)
    for m in mixes:
        assert (m.market_fraction * 100, m.etf_fraction * 100) == MIX_PERCENT[m.label]
        assert m.market_fraction + m.etf_fraction == 1
    assert (float(mix("tr1").market_fraction), float(mix("tr1").etf_fraction)) == (1.0, 0.0)
    assert (float(mix("tes5").market_fraction), float(mix("tes5").etf_fraction)) == (0.8, 0.2)


def oracle_counts(market_pct, size):
    n = (Decimal(market_pct) * size / 100).quantize(Decimal(1), rounding=ROUND_HALF_UP)
    return int(n), size - int(n)


@pytest.mark.parametrize("size", [5, 10, 1, 2, 3, 7])
def test_counts_follow_rounding_rule(size):
    for m in standard_mixes():
        assert m.counts(size) == oracle_counts(MIX_PERCENT[m.label][0], size)


def test_counts_half_rounds_away_from_zero():
    assert MixSpec("x", Fraction(1, 2), Fraction(1, 2)).counts(5) == (3, 2)
    assert MixSpec("x", Fraction(1, 10), Fraction(9, 10)).counts(5) == (1, 4)


def test_mixspec_validation():
    with pytest.raises(ValueError):
        MixSpec("x", Fraction(1, 2), Fraction(1, 3))
    with pytest.raises(ValueError):
        MixSpec("x", Fraction(3, 2), Fraction(-1, 2))


def test_train_and_test_labels_swap_compositions():
    for tr, te in zip(TRAIN_LABELS, TEST_LABELS):
        assert mirror_label(tr) == te and mirror_label(te) == tr
        a, b = mix(tr), mix(te)
        assert (a.market_fraction, a.etf_fraction) == (b.etf_fraction, b.market_fraction)


def test_reversed_index_pairing_is_not_a_mirror():
    # tr_k against tes_(6-k) keeps the composition for k=3 only
    mirrored = [
        (mix(f"tr{k}").market_fraction, mix(f"tr{k}").etf_fraction)
        == (mix(f"tes{6 - k}").etf_fraction, mix(f"tes{6 - k}").market_fraction)
        for k in range(1, 6)
    ]
    assert mirrored == [False, False, True, False, False]


def test_pool_examples():
    tr1 = build_pool(mix("tr1"), MARKET, ETF, 5, seed=0)
    assert tr1.composition == {"market": 5, "etf": 0}
    tes1 = build_pool(mix("tes1"), MARKET, ETF, 5, seed=0)
    assert tes1.composition == {"market": 0, "etf": 5}


@given(st.integers(0, 2**32 - 1), st.sampled_from(list(MIX_PERCENT)))
def test_pool_deterministic_and_without_replacement(seed, label):
    a = build_pool(mix(label), MARKET, ETF, 5, seed)
    b = build_pool(mix(label), MARKET, ETF, 5, seed)
    assert [id(m) for m in a.members] == [id(m) for m in b.members]
    assert len({id(m) for m in a.members}) == 5
    assert (a.composition["market"], a.composition["etf"]) == mix(label).counts(5)


def test_pool_size_ten_needs_ten_days():
    many_days = [f"2020-01-{d:02d}" for d in range(1, 11)]
    m, e = _fps("market", many_days), _fps("etf", many_days)
    for spec in standard_mixes():
        pool = build_pool(spec, m, e, 10, seed=4)
        assert (pool.composition["market"], pool.composition["etf"]) == spec.counts(10)
    with pytest.raises(PoolCapacityError):
        build_pool(mix("tr1"), MARKET, ETF, 10)


def test_standard_pools_first_members_mirror():
    pools = build_standard_pools(MARKET, ETF, 5, seed=9)
    assert list(pools) == list(MIX_PERCENT)
    for tr, te in zip(TRAIN_LABELS, TEST_LABELS):
        first_tr, first_te = pools[tr].members[0], pools[te].members[0]
        assert first_tr.day_label == first_te.day_label
        assert (first_tr.family, first_te.family) == ("market", "etf")


def test_different_seeds_differ():
    draws = {tuple(m.day_label for m in build_pool(mix("tr3"), MARKET, ETF, 5, s).members) for s in range(20)}
    assert len(draws) > 1


def test_manifest_round_trip(tmp_path):
    pools = build_standard_pools(MARKET, ETF, 5, seed=1)
    paths = {(fp.day_label, fp.family): f"fp/{fp.day_label}.{fp.family}.fp" for fp in MARKET + ETF}
    path = tmp_path / "pools.csv"
    write_manifest(path, pools, paths)
    header = path.read_text().splitlines()[0]
    assert header == "pool_label,member_index,day,family,fingerprint_path"
    back = read_manifest(path)
    assert list(back) == list(pools)
    for label, pool in pools.items():
        assert [(r["day"], r["family"]) for r in back[label]] == [(m.day_label, m.family) for m in pool.members]


def test_manifest_missing_columns(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("pool_label,day\ntr1,2019-10-07\n")
    with pytest.raises(ValueError, match="missing columns"):
        read_manifest(path)
