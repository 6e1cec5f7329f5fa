"""Exhaustive CAM-group inclusion/exclusion campaigns.

Groups of methodologically similar maps are toggled together; every
non-empty subset of groups becomes one experiment (the empty set is kept
as a formal null record so the 2^n arithmetic stays intact).  Each
experiment runs adaptive-threshold consensus fusion, and the campaign
aggregates per-k statistics, best-threshold frequencies, and the maximum
achievable ROAD score.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .adaptive import DEFAULT_K_GRID, ThresholdSweep, adaptive_threshold
from .bundle import ExperimentBundle
from .core import is_valid
from .errors import MissingMap, TooManyGroups
from .road import DEFAULT_PERCENTILES, ImputationConfig

MAX_GROUPS = 16

# Default grouping by methodological similarity.
DEFAULT_GROUP_TABLE = {
    "A": ["HiResCAM", "GradCAMElementwise"],
    "B": ["GradCAM", "GradCAM++"],
    "C": ["XGradCAM"],
    "D": ["AblationCAM", "ScoreCAM"],
    "E": ["LayerCAM"],
    "F": ["FullGrad"],
}


@dataclass(frozen=True)
class CamGroup:
    code: str
    members: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))


def default_groups() -> list[CamGroup]:
    return [CamGroup(code, tuple(members)) for code, members in DEFAULT_GROUP_TABLE.items()]


@dataclass(frozen=True, order=True)
class CamSetId:
    """Bitmask over groups; the first group (A) is the most significant bit."""

    bitmask: int
    n_groups: int

    def contains(self, group_index: int) -> bool:
        return bool(self.bitmask >> (self.n_groups - 1 - group_index) & 1)

    def group_codes(self, groups: Sequence[CamGroup]) -> tuple[str, ...]:
        return tuple(g.code for i, g in enumerate(groups) if self.contains(i))

    def member_labels(self, groups: Sequence[CamGroup]) -> tuple[str, ...]:
        out: list[str] = []
        for i, g in enumerate(groups):
            if self.contains(i):
                out.extend(g.members)
        return tuple(out)

    def __str__(self) -> str:
        return format(self.bitmask, f"0{self.n_groups}b")


def enumerate_camsets(groups: Sequence[CamGroup]) -> list[CamSetId]:
    """All non-empty inclusion bitmasks in ascending order."""
    n = len(groups)
    if not (1 <= n <= MAX_GROUPS):
        raise TooManyGroups(f"got {n} groups, supported range is 1..{MAX_GROUPS}")
    return [CamSetId(m, n) for m in range(1, 2**n)]


@dataclass(frozen=True)
class ExperimentRecord:
    camset: CamSetId
    sweep: ThresholdSweep | None  # None for the formal empty-set record
    map_labels: tuple[str, ...] = ()

    @property
    def executed(self) -> bool:
        return self.sweep is not None


@dataclass(frozen=True)
class CampaignResult:
    groups: tuple[CamGroup, ...]
    records: tuple[ExperimentRecord, ...]
    k_values: tuple[float, ...]
    mean_by_k: tuple[float, ...]
    ci_halfwidth_by_k: tuple[float, ...]
    best_k_counts: dict[float, int] = field(compare=False)
    best_bitmask: int = 0
    best_score: float = float("-inf")
    invalid_labels: tuple[str, ...] = ()

    def executed_records(self) -> list[ExperimentRecord]:
        return [r for r in self.records if r.executed]

    def scores_for_cre(self) -> list[tuple[CamSetId, float]]:
        return [(r.camset, r.sweep.best_score) for r in self.executed_records()]


def _validate_groups(bundle: ExperimentBundle, groups: Sequence[CamGroup]) -> list[str]:
    seen: set[str] = set()
    for g in groups:
        for label in g.members:
            if label in seen:
                raise MissingMap(f"map {label!r} appears in more than one group")
            seen.add(label)
            if label not in bundle.maps:
                raise MissingMap(f"bundle has no map for group member {label!r}")
    return [label for label in seen if not is_valid(bundle.maps[label])]


def run_campaign(
    bundle: ExperimentBundle,
    groups: Sequence[CamGroup] | None = None,
    k_grid: Sequence[float] = DEFAULT_K_GRID,
    percentiles: Sequence[float] = DEFAULT_PERCENTILES,
    config: ImputationConfig = ImputationConfig(),
    seed=0,
    workers: int | None = None,
) -> CampaignResult:
    """Run adaptive-threshold fusion for every non-empty group subset.

    One seed is shared by all experiments, making the lattice a paired
    comparison.  Aggregation order is fixed by bitmask, so results are
    identical regardless of worker scheduling.
    """
    groups = tuple(groups if groups is not None else default_groups())
    invalid = sorted(_validate_groups(bundle, groups))
    camsets = enumerate_camsets(groups)

    def run_one(camset: CamSetId) -> ExperimentRecord:
        labels = [l for l in camset.member_labels(groups) if l not in invalid]
        if not labels:
            return ExperimentRecord(camset, None, camset.member_labels(groups))
        maps = [bundle.maps[l] for l in labels]
        _, sweep = adaptive_threshold(
            maps, bundle.image, bundle.class_id, bundle.oracle,
            k_grid, percentiles, config, seed,
        )
        return ExperimentRecord(camset, sweep, tuple(labels))

    if workers is None:
        workers = int(os.environ.get("CAMFORGE_WORKERS", "1"))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            executed = list(pool.map(run_one, camsets))
    else:
        executed = [run_one(c) for c in camsets]

    records = [ExperimentRecord(CamSetId(0, len(groups)), None)] + executed
    records.sort(key=lambda r: r.camset.bitmask)

    sweeps = [r.sweep for r in records if r.sweep is not None]
    ks = tuple(sorted(float(k) for k in k_grid))
    if sweeps:
        matrix = np.array([s.combined() for s in sweeps])  # (m, |k|)
        mean = matrix.mean(axis=0)
        m = matrix.shape[0]
        sd = matrix.std(axis=0, ddof=1) if m > 1 else np.zeros(len(ks))
        ci = 1.96 * sd / np.sqrt(m)
    else:
        mean = np.zeros(len(ks))
        ci = np.zeros(len(ks))

    counts = {k: 0 for k in ks}
    for s in sweeps:
        counts[s.best_k] += 1

    best_bitmask, best_score = 0, float("-inf")
    for r in records:
        if r.sweep is not None and r.sweep.best_score > best_score:
            best_bitmask, best_score = r.camset.bitmask, r.sweep.best_score

    return CampaignResult(
        groups=groups,
        records=tuple(records),
        k_values=ks,
        mean_by_k=tuple(float(x) for x in mean),
        ci_halfwidth_by_k=tuple(float(x) for x in ci),
        best_k_counts=counts,
        best_bitmask=best_bitmask,
        best_score=best_score,
        invalid_labels=tuple(invalid),
    )
