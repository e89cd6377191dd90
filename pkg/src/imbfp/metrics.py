"""Frobenius cosine between image arrays, the log2 ratio score MInfo, and its report."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .protocol import TEST_LABELS, TRAIN_LABELS

CLAMP_SLACK = 1e-12


@dataclass(frozen=True)
class CosineScore:
    value: float
    variant: str  # "exact" or "stable"

    def __float__(self):
        return self.value


def _pair(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return x, y


def frobenius_inner(x, y) -> float:
    x, y = _pair(x, y)
    return float(np.sum(x * y))


def frobenius_norm(x) -> float:
    return float(np.sqrt(np.sum(np.square(np.asarray(x, dtype=np.float64)))))


def _polarized(a, b) -> float:
    """(|a+b|^2 - |a-b|^2) / 4, i.e. the inner product via the polarization identity."""
    return (float(np.sum(np.square(a + b))) - float(np.sum(np.square(a - b)))) / 4.0


def cosine_exact(x, y) -> CosineScore:
    x, y = _pair(x, y)
    nx, ny = frobenius_norm(x), frobenius_norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("cosine undefined for a zero-norm image")
    value = _polarized(x, y) / (nx * ny)
    if 1.0 < abs(value) <= 1.0 + CLAMP_SLACK:
        value = math.copysign(1.0, value)
    return CosineScore(value, "exact")


def cosine_stable(train, test, fake, literal: bool = False) -> tuple[CosineScore, CosineScore]:
    """Train/fake and test/fake scores sharing the denominator |train|.|test|.

    Defined for an all-zero ``fake`` (both scores are 0). ``literal=True``
    reproduces the printed variant whose test score subtracts |train - fake|^2.
    """
    train, test = _pair(train, test)
    _, fake = _pair(train, fake)
    denom = frobenius_norm(train) * frobenius_norm(test)
    if denom == 0:
        raise ValueError("train and test images must have nonzero norm")
    c_train = _polarized(train, fake) / denom
    if literal:
        num = float(np.sum(np.square(test + fake))) - float(np.sum(np.square(train - fake)))
        c_test = num / (4.0 * denom)
    else:
        c_test = _polarized(test, fake) / denom
    return CosineScore(c_train, "stable"), CosineScore(c_test, "stable")


@dataclass(frozen=True)
class MInfoResult:
    value: float
    n_runs: int
    per_run_terms: tuple[float, ...]


def log_ratio(c_train: float, c_test: float, epsilon: float = 1e-12) -> float:
    return math.log2(max(float(c_train), epsilon)) - math.log2(max(float(c_test), epsilon))


def minfo(runs: Sequence[Sequence[tuple[float, float]]], epsilon: float = 1e-12) -> MInfoResult:
    """Two-stage average of log2(C_train / C_test).

    ``runs[i]`` holds the (C_train, C_test) pairs of run ``i``'s fakes; each run
    is averaged over its fakes first, then the run terms are averaged.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not runs or any(len(r) == 0 for r in runs):
        raise ValueError("minfo needs at least one run with at least one fake")
    terms = tuple(
        math.fsum(log_ratio(ct, cs, epsilon) for ct, cs in run) / len(run) for run in runs
    )
    return MInfoResult(math.fsum(terms) / len(terms), len(terms), terms)


def fake_pairs(train, test, fakes, variant: str = "stable") -> list[tuple[float, float]]:
    """(C_train_fake, C_test_fake) for every fake.

    ``variant`` is ``"stable"`` (shared denominator), ``"exact"`` (plain cosine;
    an all-zero fake scores (0, 0)) or ``"literal"`` (the printed stable form).
    """
    out = []
    for fake in fakes:
        if variant == "exact":
            if frobenius_norm(fake) == 0:
                out.append((0.0, 0.0))
                continue
            out.append((cosine_exact(train, fake).value, cosine_exact(test, fake).value))
        elif variant in ("stable", "literal"):
            a, b = cosine_stable(train, test, fake, literal=variant == "literal")
            out.append((a.value, b.value))
        else:
            raise ValueError(f"unknown cosine variant {variant!r}")
    return out


@dataclass(frozen=True)
class MInfoReport:
    cells: Mapping[tuple[str, str], MInfoResult]  # keyed (test_label, train_label)
    test_labels: tuple[str, ...] = TEST_LABELS
    train_labels: tuple[str, ...] = TRAIN_LABELS

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.cells[(te, tr)].value for tr in self.train_labels] for te in self.test_labels]
        )

    @property
    def row_averages(self) -> dict[str, float]:
        """Per test file, averaged over training files."""
        return {
            te: math.fsum(self.cells[(te, tr)].value for tr in self.train_labels) / len(self.train_labels)
            for te in self.test_labels
        }

    @property
    def column_averages(self) -> dict[str, float]:
        """Per training file, averaged over test files."""
        return {
            tr: math.fsum(self.cells[(te, tr)].value for te in self.test_labels) / len(self.test_labels)
            for tr in self.train_labels
        }

    def render(self) -> str:
        """Fixed-width text: per-run cell table, then the two average tables."""
        lines = []
        header = "".join(f"{tr:>20}" for tr in self.train_labels)
        lines.append(f"{'':<6}{header}")
        for te in self.test_labels:
            row = []
            for tr in self.train_labels:
                terms = " ".join(f"{t:8.4f}" for t in self.cells[(te, tr)].per_run_terms)
                row.append(f"{terms:>20}")
            lines.append(f"{te:<6}{''.join(row)}")
        lines.append("")
        lines.append(f"{'Training file':<15}{'Test file average':>19}   {'Test file':<10}{'Training file average':>22}")
        cols, rows = self.column_averages, self.row_averages
        for tr, te in zip(self.train_labels, self.test_labels):
            lines.append(f"{tr:<15}{cols[tr]:>19.4f}   {te:<10}{rows[te]:>22.4f}")
        return "\n".join(lines) + "\n"


def summarize(cells: Mapping[tuple[str, str], MInfoResult]) -> MInfoReport:
    missing = [(te, tr) for te in TEST_LABELS for tr in TRAIN_LABELS if (te, tr) not in cells]
    if missing:
        raise ValueError(f"incomplete grid, missing {missing[:3]}")
    return MInfoReport(dict(cells))


REPORT_FIELDS = ("test_label", "train_label", "run", "minfo_term")


def write_report_csv(path, report: MInfoReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REPORT_FIELDS)
        for te in report.test_labels:
            for tr in report.train_labels:
                for run, term in enumerate(report.cells[(te, tr)].per_run_terms):
                    w.writerow([te, tr, run, repr(term)])


def read_report_csv(path) -> MInfoReport:
    terms: dict[tuple[str, str], list[tuple[int, float]]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            terms.setdefault((row["test_label"], row["train_label"]), []).append(
                (int(row["run"]), float(row["minfo_term"]))
            )
    cells = {}
    for key, items in terms.items():
        values = tuple(v for _, v in sorted(items))
        cells[key] = MInfoResult(math.fsum(values) / len(values), len(values), values)
    return summarize(cells)
