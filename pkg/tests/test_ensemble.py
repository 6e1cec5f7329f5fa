import numpy as np
import pytest

from camforge import (
    ActivationMap,
    CamGroup,
    CamSetId,
    ExperimentBundle,
    ImputationConfig,
    RegionOracle,
    adaptive_threshold_single,
    default_groups,
    enumerate_camsets,
    random_cam,
    run_campaign,
)
from camforge.errors import MissingMap, TooManyGroups

from synthcases import indicator_map, region_image, region_mask

SIGMA0 = ImputationConfig(noise_sigma=0.0)
GRID = (20.0, 50.0, 100.0)


def make_bundle(extra_maps=None):
    region = region_mask(12, 12, 3, 9, 3, 9)
    maps = {
        "perfect": indicator_map(region, "perfect"),
        "adversarial": indicator_map(~region, "adversarial"),
    }
    if extra_maps:
        maps.update(extra_maps)
    return ExperimentBundle(
        image=region_image(region),
        class_id=0,
        maps=maps,
        oracle=RegionOracle(region, gain=8.0),
    )


class TestEnumeration:
    def test_n2(self):
        sets = enumerate_camsets([CamGroup("A", ("x",)), CamGroup("B", ("y",))])
        assert [str(s) for s in sets] == ["01", "10", "11"]

    def test_n6_counts(self):
        sets = enumerate_camsets(default_groups())
        assert len(sets) == 63  # 64 including the formal empty set
        for i in range(6):
            included = sum(s.contains(i) for s in sets)
            assert included == 32  # 2^(n-1) over the full enumeration

    def test_bitmask_a_is_most_significant(self):
        groups = default_groups()
        camset = CamSetId(int("100000", 2), 6)
        assert camset.group_codes(groups) == ("A",)
        assert camset.member_labels(groups) == ("HiResCAM", "GradCAMElementwise")

    def test_too_many_groups(self):
        groups = [CamGroup(str(i), (f"m{i}",)) for i in range(17)]
        with pytest.raises(TooManyGroups):
            enumerate_camsets(groups)


class TestRunCampaign:
    def test_degenerate_single_group(self):
        bundle = make_bundle()
        groups = [CamGroup("A", ("perfect",))]
        result = run_campaign(bundle, groups, GRID, config=SIGMA0, seed=3)
        assert len(result.records) == 2  # formal empty set + the one experiment
        assert not result.records[0].executed
        direct_map, direct = adaptive_threshold_single(
            bundle.maps["perfect"], bundle.image, 0, bundle.oracle,
            GRID, config=SIGMA0, seed=3,
        )
        sweep = result.records[1].sweep
        assert sweep.best_k == direct.best_k
        np.testing.assert_allclose(sweep.combined(), direct.combined(), atol=1e-12)

    def test_max_road_includes_perfect_map(self):
        bundle = make_bundle()
        groups = [CamGroup("A", ("perfect",)), CamGroup("B", ("adversarial",))]
        result = run_campaign(bundle, groups, GRID, config=SIGMA0)
        best = CamSetId(result.best_bitmask, 2)
        assert "perfect" in best.member_labels(groups)

    def test_statistics_match_scalar_oracle(self):
        bundle = make_bundle()
        groups = [CamGroup("A", ("perfect",)), CamGroup("B", ("adversarial",))]
        result = run_campaign(bundle, groups, GRID, config=SIGMA0)
        matrix = np.array([r.sweep.combined() for r in result.executed_records()])
        m = matrix.shape[0]
        assert m == 3
        for j, k in enumerate(result.k_values):
            col = matrix[:, j]
            mean = sum(col) / m
            sd = (sum((c - mean) ** 2 for c in col) / (m - 1)) ** 0.5
            assert result.mean_by_k[j] == pytest.approx(mean, abs=1e-12)
            assert result.ci_halfwidth_by_k[j] == pytest.approx(
                1.96 * sd / m**0.5, abs=1e-12
            )

    def test_internal_consistency(self):
        bundle = make_bundle({"noise": random_cam(12, 12, seed=4)})
        groups = [
            CamGroup("A", ("perfect",)),
            CamGroup("B", ("adversarial",)),
            CamGroup("C", ("noise",)),
        ]
        result = run_campaign(bundle, groups, GRID, config=SIGMA0)
        best_over_sweeps = max(r.sweep.best_score for r in result.executed_records())
        assert result.best_score == best_over_sweeps
        assert sum(result.best_k_counts.values()) == len(result.executed_records())

    def test_missing_map(self):
        bundle = make_bundle()
        with pytest.raises(MissingMap):
            run_campaign(bundle, [CamGroup("A", ("nope",))], GRID, config=SIGMA0)

    def test_duplicate_member(self):
        bundle = make_bundle()
        groups = [CamGroup("A", ("perfect",)), CamGroup("B", ("perfect",))]
        with pytest.raises(MissingMap):
            run_campaign(bundle, groups, GRID, config=SIGMA0)

    def test_invalid_maps_filtered(self):
        bundle = make_bundle({"dead": ActivationMap(np.zeros((12, 12)), label="dead")})
        groups = [CamGroup("A", ("perfect",)), CamGroup("B", ("dead",))]
        result = run_campaign(bundle, groups, GRID, config=SIGMA0)
        assert result.invalid_labels == ("dead",)
        # experiment 01 (dead only) has nothing to fuse -> recorded as null
        rec = next(r for r in result.records if str(r.camset) == "01")
        assert not rec.executed
        # experiment 11 falls back to just the perfect map
        rec = next(r for r in result.records if str(r.camset) == "11")
        assert rec.map_labels == ("perfect",)

    def test_worker_pool_matches_sequential(self):
        bundle = make_bundle({"noise": random_cam(12, 12, seed=4)})
        groups = [
            CamGroup("A", ("perfect",)),
            CamGroup("B", ("adversarial",)),
            CamGroup("C", ("noise",)),
        ]
        seq = run_campaign(bundle, groups, GRID, config=SIGMA0, seed=5, workers=1)
        par = run_campaign(bundle, groups, GRID, config=SIGMA0, seed=5, workers=4)
        assert seq.best_bitmask == par.best_bitmask
        assert seq.mean_by_k == par.mean_by_k
        for a, b in zip(seq.records, par.records):
            assert a.camset == b.camset
            if a.sweep is not None:
                np.testing.assert_array_equal(a.sweep.combined(), b.sweep.combined())
