"""Compare the compiled and pure-Python kernels on one synthetic day.

    python3 benchmarks/bench_kernels.py --messages 100000 --repeat 3
"""

import argparse
import timeit

import numpy as np

from imbfp import kernels
from imbfp.etf import build_universe
from imbfp.feed import parse_line
from imbfp.fingerprint import BinGrid, day_aggregates
from imbfp.synth import SynthConfig, generate_day


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--messages", type=int, default=100_000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    day = generate_day(SynthConfig(total_messages=args.messages), "2019-10-07")
    data = day.text().encode()
    grid = BinGrid()
    rng = np.random.default_rng(0)
    t_idx = rng.integers(-1, grid.n_time_bins, args.messages)
    p_idx = rng.integers(0, grid.n_prices, args.messages)
    dollars = rng.exponential(1e5, args.messages)

    rows = []
    for name, mod in sorted(kernels.BACKENDS.items()):
        scan = best(lambda: mod.scan_imbalances(data), args.repeat)
        acc = best(lambda: mod.accumulate(t_idx, p_idx, dollars, grid.n_time_bins, grid.n_prices), args.repeat)
        rows.append((name, scan, acc))
    universe = build_universe(day.names)
    obj = best(lambda: day_aggregates(map(parse_line, day.lines), universe), 1)

    print(f"{len(day.lines)} lines, {len(data) / 1e6:.1f} MB, active backend: {kernels.BACKEND}")
    print(f"{'backend':<10}{'scan s':>10}{'accumulate s':>14}")
    for name, scan, acc in rows:
        print(f"{name:<10}{scan:>10.4f}{acc:>14.4f}")
    if len(rows) == 2:
        (_, cs, ca), (_, ps, pa) = rows
        print(f"speedup   {ps / cs:>9.1f}x{pa / ca:>13.1f}x")
    print(f"object route (parse_line + aggregate_day): {obj:.3f} s")


if __name__ == "__main__":
    main()
