import json

import numpy as np
import pytest

from camforge import ConstantOracle, RegionOracle, load_bundle, load_campaign_manifest
from camforge.errors import ClassOutOfRange, DimensionMismatch, ManifestError
from camforge.formats import write_image, write_map

from synthcases import indicator_map, region_image, region_mask


def write_disk_bundle(root, *, class_id=0, oracle=None, invalid=None, extra=None):
    """Materialize a small two-map bundle and return its manifest path."""
    region = region_mask(8, 8, 2, 6, 2, 6)
    write_image(root / "image.imgt", region_image(region))
    (root / "maps").mkdir(exist_ok=True)
    write_map(root / "maps" / "perfect.camm", indicator_map(region))
    write_map(root / "maps" / "adversarial.camm", indicator_map(~region))
    doc = {
        "image": "image.imgt",
        "class_id": class_id,
        "maps": {
            "perfect": "maps/perfect.camm",
            "adversarial": "maps/adversarial.camm",
        },
        "metadata": {"note": "synthetic"},
    }
    if oracle is not None:
        doc["oracle"] = oracle
    if invalid is not None:
        doc["invalid"] = invalid
    if extra:
        doc.update(extra)
    path = root / "bundle.json"
    path.write_text(json.dumps(doc))
    return path


class TestLoadBundle:
    def test_round_trip(self, tmp_path):
        path = write_disk_bundle(tmp_path)
        bundle = load_bundle(path)
        assert bundle.class_id == 0
        assert set(bundle.maps) == {"perfect", "adversarial"}
        assert bundle.maps["perfect"].label == "perfect"
        assert bundle.image.values.shape == (1, 8, 8)
        assert bundle.metadata == {"note": "synthetic"}
        assert bundle.oracle is None

    def test_paths_resolve_relative_to_manifest(self, tmp_path, monkeypatch):
        path = write_disk_bundle(tmp_path)
        elsewhere = tmp_path / "elsewhere"
        elsewhere.mkdir()
        monkeypatch.chdir(elsewhere)
        assert load_bundle(path).maps  # loads despite a different cwd

    def test_invalid_list_excludes_maps(self, tmp_path):
        path = write_disk_bundle(tmp_path, invalid=["adversarial"])
        bundle = load_bundle(path)
        assert set(bundle.maps) == {"perfect"}

    def test_missing_field_named_in_error(self, tmp_path):
        path = write_disk_bundle(tmp_path)
        doc = json.loads(path.read_text())
        del doc["class_id"]
        path.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="class_id"):
            load_bundle(path)

    def test_unparseable_manifest(self, tmp_path):
        path = tmp_path / "bundle.json"
        path.write_text("{not json")
        with pytest.raises(ManifestError):
            load_bundle(path)

    def test_map_shape_mismatch(self, tmp_path):
        path = write_disk_bundle(tmp_path)
        write_map(tmp_path / "maps" / "perfect.camm", indicator_map(np.ones((4, 4), bool)))
        with pytest.raises(DimensionMismatch):
            load_bundle(path)

    def test_inline_constant_oracle(self, tmp_path):
        path = write_disk_bundle(
            tmp_path, oracle={"type": "constant", "probs": [0.7, 0.3]}
        )
        bundle = load_bundle(path)
        assert isinstance(bundle.oracle, ConstantOracle)
        assert bundle.oracle.class_count == 2

    def test_inline_region_oracle(self, tmp_path):
        region = region_mask(8, 8, 2, 6, 2, 6)
        path = write_disk_bundle(
            tmp_path,
            oracle={"type": "region", "region_map": "maps/perfect.camm", "gain": 4.0},
        )
        bundle = load_bundle(path)
        assert isinstance(bundle.oracle, RegionOracle)
        probs = bundle.oracle.predict(region_image(region))
        assert probs[0] > 0.5

    def test_unknown_oracle_type(self, tmp_path):
        path = write_disk_bundle(tmp_path, oracle={"type": "psychic"})
        with pytest.raises(ManifestError):
            load_bundle(path)

    def test_require_oracle(self, tmp_path):
        path = write_disk_bundle(tmp_path)
        with pytest.raises(ManifestError, match="oracle"):
            load_bundle(path, require_oracle=True)

    def test_class_out_of_range(self, tmp_path):
        path = write_disk_bundle(
            tmp_path, class_id=7, oracle={"type": "constant", "probs": [0.5, 0.5]}
        )
        with pytest.raises(ClassOutOfRange):
            load_bundle(path)


def write_campaign_manifest(root, *, extra=None):
    region = region_mask(8, 8, 2, 6, 2, 6)
    write_image(root / "image.imgt", region_image(region))
    (root / "maps").mkdir(exist_ok=True)
    write_map(root / "maps" / "perfect.camm", indicator_map(region))
    write_map(root / "maps" / "adversarial.camm", indicator_map(~region))
    doc = {
        "image": "image.imgt",
        "class_id": 0,
        "groups": {
            "A": ["maps/perfect.camm"],
            "B": ["maps/adversarial.camm"],
        },
        "oracle": {"type": "region", "region_map": "maps/perfect.camm"},
    }
    if extra:
        doc.update(extra)
    path = root / "campaign.json"
    path.write_text(json.dumps(doc))
    return path


class TestLoadCampaignManifest:
    def test_groups_and_defaults(self, tmp_path):
        path = write_campaign_manifest(tmp_path)
        spec = load_campaign_manifest(path)
        assert [g.code for g in spec.groups] == ["A", "B"]
        assert spec.groups[0].members == ("perfect",)
        assert set(spec.bundle.maps) == {"perfect", "adversarial"}
        assert spec.k_grid == [float(k) for k in range(15, 46)]
        assert spec.percentiles == [20.0, 40.0, 60.0, 80.0]
        assert spec.sigma == 0.05
        assert spec.seed == 0
        assert spec.workers == 1

    def test_explicit_parameters(self, tmp_path):
        path = write_campaign_manifest(
            tmp_path,
            extra={"k_grid": [20, 50], "percentiles": [50], "sigma": 0.0,
                   "seed": 9, "workers": 2},
        )
        spec = load_campaign_manifest(path)
        assert spec.k_grid == [20.0, 50.0]
        assert spec.percentiles == [50.0]
        assert spec.sigma == 0.0
        assert spec.seed == 9
        assert spec.workers == 2

    def test_duplicate_label_rejected(self, tmp_path):
        path = write_campaign_manifest(
            tmp_path,
            extra={"groups": {"A": ["maps/perfect.camm"], "B": ["maps/perfect.camm"]}},
        )
        with pytest.raises(ManifestError, match="duplicate"):
            load_campaign_manifest(path)

    def test_oracle_required(self, tmp_path):
        path = write_campaign_manifest(tmp_path)
        doc = json.loads(path.read_text())
        del doc["oracle"]
        path.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="oracle"):
            load_campaign_manifest(path)
