"""Study statistics: paired permutation testing, Likert descriptives and
cross-deployment comparison tables.

The permutation test sign-flips per-subject paired differences and recomputes
the Student's t statistic under the null. For small n the null distribution
is enumerated exhaustively over all 2^n sign assignments; otherwise it is
sampled with a seeded generator. The two-sided p-value is the proportion of
flips with |t*| >= |t| - 1e-12; the tolerance keeps the identity permutation
counted despite floating point.

Conventions, fixed deliberately: the t statistic uses the sample standard
deviation (n-1 denominator), Likert descriptives use the population standard
deviation (n denominator) and exclude N/A responses.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

T_TIE_TOLERANCE = 1e-12
_ENUM_CHUNK = 1 << 16


class AllNAError(ValueError):
    """Every response is N/A; statistics are undefined."""


@dataclass
class PairedSamples:
    """Positionally paired scores for one cohort (e.g. two exams)."""

    subject_ids: list
    a: list[float]
    b: list[float]

    def __post_init__(self):
        if not (len(self.a) == len(self.b) == len(self.subject_ids)):
            raise ValueError("subject_ids, a and b must have equal length")
        if len(self.a) < 2:
            raise ValueError("paired test needs at least 2 subjects")


@dataclass
class PermutationTestResult:
    t_statistic: float
    p_value: float
    n_permutations_used: int
    exhaustive: bool


def t_statistic(differences: Sequence[float]) -> float:
    """Paired Student's t: mean(d) / (sd(d) / sqrt(n)), sample sd.

    Degenerate cases: all-zero differences give t = 0; constant nonzero
    differences give signed infinity.
    """
    d = np.asarray(differences, dtype=np.float64)
    n = len(d)
    mean = float(d.mean())
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        return 0.0 if mean == 0.0 else math.copysign(math.inf, mean)
    return mean / (sd / math.sqrt(n))


def _flip_t_stats(d: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """t statistic for each row of a +-1 sign matrix, vectorized.

    Squared deviations do not depend on signs, so the per-flip variance
    follows from the flipped mean alone: var = (sum(d^2) - n*m^2) / (n-1).
    """
    n = len(d)
    m = signs @ d / n
    ss = float(np.sum(d * d))
    var = np.maximum(ss - n * m * m, 0.0) / (n - 1)
    t = np.empty_like(m)
    zero_var = var == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        t[~zero_var] = m[~zero_var] / np.sqrt(var[~zero_var] / n)
    t[zero_var] = np.where(m[zero_var] == 0.0, 0.0, np.copysign(np.inf, m[zero_var]))
    return t


def _exhaustive_p(d: np.ndarray, t_obs: float) -> tuple[float, int]:
    n = len(d)
    total = 1 << n
    threshold = abs(t_obs) - T_TIE_TOLERANCE
    hits = 0
    bit_positions = np.arange(n, dtype=np.uint64)
    for start in range(0, total, _ENUM_CHUNK):
        idx = np.arange(start, min(start + _ENUM_CHUNK, total), dtype=np.uint64)
        bits = ((idx[:, None] >> bit_positions) & 1).astype(np.float64)
        t_star = _flip_t_stats(d, bits * 2.0 - 1.0)
        hits += int(np.sum(np.abs(t_star) >= threshold))
    return hits / total, total


def paired_permutation_test(
    samples: PairedSamples,
    max_exhaustive_n: int = 20,
    n_resamples: int = 100_000,
    seed: int | None = None,
) -> PermutationTestResult:
    """Two-sided paired permutation test with the Student's t statistic.

    Exhaustive over all 2^n sign flips when n <= max_exhaustive_n. The
    Monte-Carlo path also switches to exhaustive enumeration whenever
    n_resamples covers all 2^n flips, so forcing it through small n
    reproduces the exhaustive p exactly.
    """
    d = np.asarray(samples.a, dtype=np.float64) - np.asarray(samples.b, dtype=np.float64)
    n = len(d)
    t_obs = t_statistic(d)
    if n <= max_exhaustive_n or (n <= 30 and (1 << n) <= n_resamples):
        p, used = _exhaustive_p(d, t_obs)
        return PermutationTestResult(t_obs, p, used, exhaustive=True)
    rng = np.random.default_rng(seed)
    signs = rng.integers(0, 2, size=(n_resamples, n)).astype(np.float64) * 2 - 1
    t_star = _flip_t_stats(d, signs)
    p = float(np.mean(np.abs(t_star) >= abs(t_obs) - T_TIE_TOLERANCE))
    return PermutationTestResult(t_obs, p, n_resamples, exhaustive=False)


@dataclass
class LikertResponses:
    """1-5 scale responses; None marks a Not Applicable answer."""

    values: list[int | None]

    def __post_init__(self):
        for v in self.values:
            if v is not None and v not in (1, 2, 3, 4, 5):
                raise ValueError(f"Likert value must be 1..5 or N/A, got {v!r}")


def likert_stats(responses: LikertResponses) -> dict:
    """Mean, population standard deviation and n over non-N/A responses."""
    if not responses.values:
        raise ValueError("no responses given")
    kept = [v for v in responses.values if v is not None]
    if not kept:
        raise AllNAError("all responses are N/A")
    arr = np.asarray(kept, dtype=np.float64)
    return {"mean": float(arr.mean()), "sd": float(arr.std(ddof=0)), "n": len(kept)}


def delta_percent(ours: float, theirs: float) -> float:
    """Percentage difference of our value relative to theirs."""
    if theirs == 0:
        raise ValueError("delta is undefined against a zero reference")
    return 100.0 * (ours - theirs) / theirs


def comparison_table(ours: Sequence[dict], theirs: Sequence[dict]) -> list[dict]:
    """Row-wise comparison of two summaries with percentage deltas on means
    and standard deviations. Rows align positionally."""
    if len(ours) != len(theirs):
        raise ValueError("comparison sides must have the same number of rows")
    rows = []
    for mine, other in zip(ours, theirs):
        rows.append(
            {
                "label": mine["label"],
                "ours_mean": mine["mean"],
                "ours_sd": mine["sd"],
                "ours_n": mine["n"],
                "theirs_mean": other["mean"],
                "theirs_sd": other["sd"],
                "theirs_n": other["n"],
                "delta_mean_pct": delta_percent(mine["mean"], other["mean"]),
                "delta_sd_pct": delta_percent(mine["sd"], other["sd"]),
            }
        )
    return rows


def bonferroni_adjust(p_values: Sequence[float]) -> list[float]:
    """Bonferroni-adjusted p-values (factor = number of comparisons).

    A blunt family-wise correction; report it alongside raw p-values, not
    instead of them.
    """
    m = len(p_values)
    return [min(1.0, p * m) for p in p_values]
