import json

import numpy as np
import pytest

from camforge.bundle import load_bundle
from camforge_exporter.cams import CAM_METHODS
from camforge_exporter.cli import main as cli_main
from camforge_exporter.errors import CamFailure, UnknownCamMethod
from camforge_exporter.export import ExportSpec, export_bundle, verify_bundle
from camforge_exporter.formats import read_image, read_map


@pytest.fixture
def exported(tmp_path, toy_entry, source_image):
    spec = ExportSpec(
        model="toycnn",
        image=source_image,
        class_id=1,
        out_dir=tmp_path / "bundle",
        pretrained=False,
    )
    return export_bundle(spec, entry=toy_entry)


class TestExportBundle:
    def test_artifacts_written(self, exported):
        base = exported.parent
        doc = json.loads(exported.read_text())
        assert doc["class_id"] == 1
        assert doc["oracle"] == "model.onnx"
        assert set(doc["maps"]) == set(CAM_METHODS)
        assert (base / "image.imgt").exists()
        assert (base / "model.onnx").exists()
        for rel in doc["maps"].values():
            assert (base / rel).exists()
        assert read_image(base / "image.imgt").shape == (3, 64, 64)

    def test_maps_are_normalized(self, exported):
        base = exported.parent
        doc = json.loads(exported.read_text())
        for label, rel in doc["maps"].items():
            m = read_map(base / rel)
            assert m.shape == (64, 64)
            if label not in doc["invalid"] and m.any():
                assert m.min() == 0.0
                assert m.max() == pytest.approx(1.0, abs=1e-6)

    def test_consumable_by_analysis_engine(self, exported, toy_model, toy_input):
        import torch

        bundle = load_bundle(exported, require_oracle=True)
        assert bundle.oracle.class_count == 8
        probs = bundle.oracle.predict(bundle.image)
        with torch.no_grad():
            expected = torch.softmax(toy_model(toy_input), dim=1)[0].numpy()
        np.testing.assert_allclose(probs, expected, atol=1e-4)

    def test_deterministic_across_runs(self, tmp_path, toy_entry, source_image):
        outs = []
        for d in ("b1", "b2"):
            spec = ExportSpec("toycnn", source_image, 1, out_dir=tmp_path / d,
                              pretrained=False)
            outs.append(export_bundle(spec, entry=toy_entry))
        m1 = json.loads(outs[0].read_text())
        m2 = json.loads(outs[1].read_text())
        assert {k: v for k, v in m1.items() if k != "metadata"} == {
            k: v for k, v in m2.items() if k != "metadata"
        }
        for rel in m1["maps"].values():
            assert (outs[0].parent / rel).read_bytes() == (
                outs[1].parent / rel
            ).read_bytes(), rel

    def test_failing_method_marked_invalid(self, tmp_path, toy_entry, source_image,
                                           monkeypatch):
        import camforge_exporter.export as export_mod

        real = export_mod.compute_cam

        def flaky(method, *args, **kwargs):
            if method == "ScoreCAM":
                raise CamFailure("synthetic failure")
            return real(method, *args, **kwargs)

        monkeypatch.setattr(export_mod, "compute_cam", flaky)
        spec = ExportSpec("toycnn", source_image, 1,
                          methods=("GradCAM", "ScoreCAM"),
                          out_dir=tmp_path / "b", pretrained=False)
        manifest = export_bundle(spec, entry=toy_entry)
        doc = json.loads(manifest.read_text())
        assert doc["invalid"] == ["ScoreCAM"]
        assert set(doc["maps"]) == {"GradCAM", "ScoreCAM"}
        # the invalid placeholder is an all-zero map
        assert not read_map(manifest.parent / doc["maps"]["ScoreCAM"]).any()

    def test_unknown_method_rejected_up_front(self, source_image):
        with pytest.raises(UnknownCamMethod):
            ExportSpec("toycnn", source_image, 1, methods=("NopeCAM",))

    def test_class_id_bounds(self, source_image, toy_entry):
        with pytest.raises(ValueError):
            ExportSpec("toycnn", source_image, 1000)
        with pytest.raises(ValueError):
            export_bundle(
                ExportSpec("toycnn", source_image, 8, pretrained=False),
                entry=toy_entry,
            )


class TestVerifyBundle:
    def test_fresh_export_passes(self, exported, capsys):
        report = verify_bundle(exported)
        assert all(ok for ok, _ in report.values())
        out = capsys.readouterr().out
        assert "[PASS] image" in out and "[FAIL]" not in out

    def test_truncated_map_fails(self, exported, capsys):
        doc = json.loads(exported.read_text())
        victim = exported.parent / doc["maps"]["GradCAM"]
        victim.write_bytes(victim.read_bytes()[:-1])
        report = verify_bundle(exported)
        ok, detail = report["map:GradCAM"]
        assert not ok and "size mismatch" in detail
        assert sum(not ok for ok, _ in report.values()) == 1

    def test_class_out_of_imagenet_range_fails(self, exported):
        doc = json.loads(exported.read_text())
        doc["class_id"] = 1000
        exported.write_text(json.dumps(doc))
        report = verify_bundle(exported)
        assert not report["class_id"][0]

    def test_missing_manifest_reports_not_raises(self, tmp_path):
        report = verify_bundle(tmp_path / "nope.json")
        assert not report["manifest"][0]


class TestCli:
    def test_export_and_verify(self, tmp_path, toy_entry, source_image, capsys):
        out = tmp_path / "bundle"
        code = cli_main([
            "export", "--model", "toycnn", "--image", str(source_image),
            "--class", "1", "--methods", "GradCAM,RandomCAM",
            "--out", str(out), "--random-weights",
        ])
        assert code == 0
        manifest = capsys.readouterr().out.strip()
        assert manifest == str(out / "manifest.json")
        assert cli_main(["verify", "--manifest", manifest]) == 0

    def test_unknown_model_is_input_error(self, tmp_path, source_image, capsys):
        code = cli_main([
            "export", "--model", "nonexistent", "--image", str(source_image),
            "--class", "1", "--out", str(tmp_path / "b"),
        ])
        assert code == 2
        assert "unknown model" in capsys.readouterr().err

    def test_verify_failure_exit_code(self, exported):
        doc = json.loads(exported.read_text())
        victim = exported.parent / doc["maps"]["GradCAM"]
        victim.write_bytes(b"garbage")
        assert cli_main(["verify", "--manifest", str(exported)]) == 3
