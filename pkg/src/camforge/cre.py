"""Cumulative Residual Effect: group-wise influence on campaign scores.

For each group, sum (experiment score - campaign median) over every
experiment that includes the group.  Residuals against the median make
the quantity additive across campaigns, so multi-campaign summaries are
plain sums of per-group values.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .ensemble import CamSetId
from .errors import EmptyInput, GroupTableMismatch


@dataclass(frozen=True)
class CreReport:
    # median is None for cross-campaign aggregates, where it has no meaning
    median_score: float | None
    residuals: dict[str, float]
    inclusion_counts: dict[str, int]

    def to_dict(self) -> dict:
        return {
            "median_score": self.median_score,
            "residuals": dict(sorted(self.residuals.items())),
            "inclusion_counts": dict(sorted(self.inclusion_counts.items())),
        }


def _default_codes(n: int) -> list[str]:
    return [chr(ord("A") + i) for i in range(n)]


def compute_cre(
    results: Sequence[tuple[CamSetId, float]],
    group_codes: Sequence[str] | None = None,
) -> CreReport:
    """Per-group cumulative residuals against the median of all scores.

    An empty-set baseline (bitmask 0), if present, enters the median but
    contributes to no group.
    """
    if len(results) == 0:
        raise EmptyInput("no experiment scores")
    scores = np.array([s for _, s in results], dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("experiment scores must be finite")
    n = results[0][0].n_groups
    codes = list(group_codes) if group_codes is not None else _default_codes(n)
    if len(codes) != n:
        raise GroupTableMismatch(f"{len(codes)} group codes for {n}-bit camsets")

    median = float(np.median(scores))
    residuals = {c: 0.0 for c in codes}
    counts = {c: 0 for c in codes}
    for camset, score in results:
        if camset.n_groups != n:
            raise GroupTableMismatch("mixed camset widths in one campaign")
        for i, c in enumerate(codes):
            if camset.contains(i):
                residuals[c] += score - median
                counts[c] += 1
    return CreReport(median, residuals, counts)


def aggregate_cre(reports: Sequence[CreReport]) -> CreReport:
    """Sum group-wise residuals and inclusion counts across campaigns."""
    if len(reports) == 0:
        raise EmptyInput("no CRE reports")
    keys = set(reports[0].residuals)
    for r in reports[1:]:
        if set(r.residuals) != keys:
            raise GroupTableMismatch(
                f"group tables differ: {sorted(keys)} vs {sorted(r.residuals)}"
            )
    residuals = {c: sum(r.residuals[c] for r in reports) for c in keys}
    counts = {c: sum(r.inclusion_counts[c] for r in reports) for c in keys}
    return CreReport(None, residuals, counts)
