"""Claim populations in run-length form and the population constants derived from them.

Amounts are held as integer cents so totals are exact; moments are floats in dollars.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

__all__ = [
    "ClaimPopulation",
    "PopulationFormatError",
    "PopulationMoments",
    "load_population",
    "moments",
    "parse_cents",
]

_AMOUNT_RE = re.compile(r"^(-?)(\d+)(?:\.(\d{1,2}))?$")


class PopulationFormatError(ValueError):
    """Raised when a population file cannot be parsed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def parse_cents(text: str) -> int:
    """Parse a decimal dollar amount with at most two decimals into integer cents.

    >>> parse_cents("12.5")
    1250
    >>> parse_cents("7")
    700
    """
    m = _AMOUNT_RE.match(text.strip())
    if m is None:
        raise ValueError(f"malformed amount {text.strip()!r}")
    sign, whole, frac = m.groups()
    cents = int(whole) * 100 + int((frac or "").ljust(2, "0"))
    return -cents if sign else cents


@dataclass(frozen=True)
class ClaimPopulation:
    """Known claim amounts as strictly increasing (amount_cents, count) runs."""

    amounts: tuple[int, ...]
    counts: tuple[int, ...]

    def __post_init__(self):
        if len(self.amounts) != len(self.counts):
            raise ValueError("amounts and counts differ in length")
        if not self.amounts:
            raise ValueError("population must contain at least one claim")
        prev = None
        for a, c in zip(self.amounts, self.counts):
            if not isinstance(a, (int, np.integer)) or not isinstance(c, (int, np.integer)):
                raise TypeError("amounts and counts must be integers")
            if a <= 0:
                raise ValueError(f"non-positive amount {a} cents")
            if c < 1:
                raise ValueError(f"count {c} < 1")
            if prev is not None and a <= prev:
                raise ValueError("amounts must be strictly increasing")
            prev = a
        object.__setattr__(self, "amounts", tuple(int(a) for a in self.amounts))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @classmethod
    def from_cents(cls, amounts: Iterable[int]) -> "ClaimPopulation":
        """Build from individual claim amounts in cents (any order, duplicates merged)."""
        tally = Counter(int(a) for a in amounts)
        keys = sorted(tally)
        return cls(tuple(keys), tuple(tally[k] for k in keys))

    @classmethod
    def from_runs(cls, runs: Iterable[tuple[int, int]]) -> "ClaimPopulation":
        tally: Counter[int] = Counter()
        for a, c in runs:
            tally[int(a)] += int(c)
        keys = sorted(tally)
        return cls(tuple(keys), tuple(tally[k] for k in keys))

    @classmethod
    def from_dollars(cls, amounts: Iterable[float]) -> "ClaimPopulation":
        """Convenience constructor; dollar values are rounded to the nearest cent."""
        return cls.from_cents(int(round(float(a) * 100)) for a in amounts)

    @property
    def N(self) -> int:
        return sum(self.counts)

    @property
    def unique(self) -> int:
        return len(self.amounts)

    @property
    def total(self) -> int:
        """Sum of all claim amounts, in cents."""
        return sum(a * c for a, c in zip(self.amounts, self.counts))

    @property
    def total_squares(self) -> int:
        """Sum of squared claim amounts, in cents squared."""
        return sum(a * a * c for a, c in zip(self.amounts, self.counts))

    @property
    def entries(self) -> list[tuple[int, int]]:
        return list(zip(self.amounts, self.counts))

    def expanded_cents(self) -> np.ndarray:
        """Every claim amount in ascending order, as an int64 array of cents."""
        return np.repeat(np.asarray(self.amounts, dtype=np.int64),
                         np.asarray(self.counts, dtype=np.int64))

    def expanded(self) -> np.ndarray:
        """Every claim amount in ascending order, in dollars."""
        return self.expanded_cents() / 100.0

    def scaled_counts(self, k: int) -> "ClaimPopulation":
        return ClaimPopulation(self.amounts, tuple(c * k for c in self.counts))


@dataclass(frozen=True)
class PopulationMoments:
    """Population constants consumed by the variance formulas (dollars; divide-by-N)."""

    N: int
    mu_x: float
    sigma2_x: float
    mu_x2: float
    tau_x: float
    tau_x2: float
    mu12: float
    sigma2_x2: float
    g1: float

    @property
    def cv2(self) -> float:
        return self.sigma2_x / self.mu_x**2


def moments(pop: ClaimPopulation) -> PopulationMoments:
    """Compute all population constants of ``pop``.

    Power sums over the (amount, count) runs are exact integers in cents, and each
    central moment is formed as an integer numerator over an integer denominator,
    so every field is a single correctly rounded division.
    """
    n = pop.N
    s1 = s2 = s3 = s4 = 0
    for a, c in zip(pop.amounts, pop.counts):
        a2 = a * a
        s1 += c * a
        s2 += c * a2
        s3 += c * a2 * a
        s4 += c * a2 * a2
    n2 = n * n
    var_num = n * s2 - s1 * s1                      # N^2 sigma2, cents^2
    sigma2 = var_num / (n2 * 10**4)
    mu12 = (n * s3 - s1 * s2) / (n2 * 10**6)
    sigma2_x2 = (n * s4 - s2 * s2) / (n2 * 10**8)
    if var_num > 0:
        third_num = n2 * s3 - 3 * n * s1 * s2 + 2 * s1**3   # N^3 m3, cents^3
        g1 = third_num / var_num / math.sqrt(var_num)
    else:
        g1 = 0.0
    return PopulationMoments(
        N=n,
        mu_x=s1 / (n * 100),
        sigma2_x=sigma2,
        mu_x2=s2 / (n * 10**4),
        tau_x=s1 / 100,
        tau_x2=s2 / 10**4,
        mu12=mu12,
        sigma2_x2=sigma2_x2,
        g1=g1,
    )


def _read_lines(source: str | Path | TextIO) -> list[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8-sig", newline="") as fh:
            return fh.read().splitlines()
    return source.read().splitlines()


def load_population(source: str | Path | TextIO, format: str = "plain") -> ClaimPopulation:
    """Read a population from a file path or an open text stream.

    ``format`` is ``"plain"`` (one amount per line, optional ``amount`` header) or
    ``"run-length"`` (``amount,count`` per line, optional ``amount,count`` header).
    Errors are raised as :class:`PopulationFormatError` with the offending line number.
    """
    if format not in ("plain", "run-length"):
        raise ValueError(f"unknown format {format!r}")
    lines = _read_lines(source)
    header = "amount" if format == "plain" else "amount,count"
    tally: Counter[int] = Counter()
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and line.replace(" ", "").lower() == header:
            continue
        if format == "plain":
            amount_text, count = line, 1
        else:
            parts = line.split(",")
            if len(parts) != 2:
                raise PopulationFormatError(f"expected 'amount,count', got {line!r}", lineno)
            amount_text = parts[0]
            try:
                count = int(parts[1].strip())
            except ValueError:
                raise PopulationFormatError(f"malformed count {parts[1].strip()!r}", lineno) from None
            if count < 1:
                raise PopulationFormatError(f"count {count} < 1", lineno)
        try:
            cents = parse_cents(amount_text)
        except ValueError as exc:
            raise PopulationFormatError(str(exc), lineno) from None
        if cents <= 0:
            raise PopulationFormatError(f"non-positive amount {amount_text.strip()}", lineno)
        tally[cents] += count
    if not tally:
        raise PopulationFormatError("empty population file")
    keys = sorted(tally)
    return ClaimPopulation(tuple(keys), tuple(tally[k] for k in keys))
