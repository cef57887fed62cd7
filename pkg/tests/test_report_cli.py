"""Evaluation runs, report determinism, CLI surfaces and exit codes."""

import json

import numpy as np
import pytest
from PIL import Image

from screenkit.cli import main
from screenkit.dataset_audit import ClassLabel, SampleRecord, SplitManifest, write_manifest
from screenkit.errors import ConfigurationError, ValidationError
from screenkit.metrics_core import ScoreRow, write_score_table
from screenkit.report import RunConfig, run_audit, run_develop, run_fixed
from screenkit.stats_inference import BootstrapConfig

B = 80  # small replicate count keeps these tests quick


def quick_bootstrap(seed=0):
    return BootstrapConfig(replicates=B, seed=seed)


class TestRunDevelop:
    def test_separable_validation_selects_smallest_tau(self, development_scores_path):
        report = run_develop(
            RunConfig(mode="develop", score_path=development_scores_path,
                      bootstrap=quick_bootstrap())
        )
        assert report["policy"]["tau_star"] == 0.20
        assert report["policy"]["feasible"] is True
        assert report["run"]["tau"] == 0.20
        assert report["screening"]["n"] == 40

    def test_single_class_validation_rejected(self, tmp_path):
        rows = [
            ScoreRow(sample_id=f"v{i}", split="val", label_class=ClassLabel.OSTEOPENIA,
                     screen_prob=0.9)
            for i in range(5)
        ]
        path = tmp_path / "one_class.csv"
        write_score_table(rows, path)
        with pytest.raises(ValidationError):
            run_develop(RunConfig(mode="develop", score_path=path,
                                  bootstrap=quick_bootstrap()))

    def test_rerun_is_byte_identical(self, development_scores_path, tmp_path):
        out_a = tmp_path / "report_a.json"
        out_b = tmp_path / "report_b.json"
        for out in (out_a, out_b):
            run_develop(
                RunConfig(mode="develop", score_path=development_scores_path,
                          bootstrap=quick_bootstrap(seed=5), output_path=out)
            )
        assert out_a.read_bytes() == out_b.read_bytes()

    def test_severity_policy_selected_on_bone_loss_rows(self, development_scores_path):
        report = run_develop(
            RunConfig(mode="develop", score_path=development_scores_path,
                      bootstrap=quick_bootstrap())
        )
        assert "severity" in report
        assert report["severity"]["positive_class"] == "osteoporosis"
        assert "severity_policy" in report
        # bone-loss mask: 20 of the 40 validation rows
        assert report["severity"]["n"] == 20


class TestRunFixed:
    def test_external_cohort_operating_point(self, external_scores_path):
        report = run_fixed(
            RunConfig(mode="external", score_path=external_scores_path, tau=0.44,
                      bootstrap=quick_bootstrap())
        )
        screening = report["screening"]
        assert screening["confusion"] == {"tp": 24, "fp": 3, "fn": 6, "tn": 9}
        assert round(screening["operating_point"]["sensitivity"]["point"], 3) == 0.800
        assert round(screening["operating_point"]["specificity"]["point"], 3) == 0.750
        assert round(screening["operating_point"]["ppv"]["point"], 3) == 0.889
        assert round(screening["operating_point"]["npv"]["point"], 3) == 0.600
        assert round(screening["operating_point"]["accuracy"]["point"], 3) == 0.786

    def test_tau_is_never_rewritten(self, external_scores_path):
        report = run_fixed(
            RunConfig(mode="external", score_path=external_scores_path, tau=0.37,
                      bootstrap=quick_bootstrap())
        )
        assert report["run"]["tau"] == 0.37
        assert report["screening"]["tau"] == 0.37

    def test_missing_tau_is_configuration_error(self, external_scores_path):
        with pytest.raises(ConfigurationError):
            RunConfig(mode="external", score_path=external_scores_path)

    def test_severity_block_absent_without_severe_probs(self, tmp_path):
        rows = [
            ScoreRow(sample_id=f"t{i}", split="test",
                     label_class=ClassLabel.OSTEOPENIA if i % 2 else ClassLabel.NORMAL,
                     screen_prob=0.8 if i % 2 else 0.2)
            for i in range(10)
        ]
        path = tmp_path / "no_severe.csv"
        write_score_table(rows, path)
        report = run_fixed(RunConfig(mode="internal_test", score_path=path, tau=0.44,
                                     bootstrap=quick_bootstrap()))
        assert "severity" not in report
        assert "tscore" not in report

    def test_tscore_block_near_perfect_agreement(self, tmp_path):
        rows = []
        for i in range(8):
            t = -3.0 + 0.4 * i
            rows.append(
                ScoreRow(sample_id=f"t{i}", split="test",
                         label_class=ClassLabel.OSTEOPOROSIS if i % 2 else ClassLabel.NORMAL,
                         screen_prob=0.9 if i % 2 else 0.1,
                         tscore_pred=t, tscore_ref=t)
            )
        path = tmp_path / "tscores.csv"
        write_score_table(rows, path)
        report = run_fixed(RunConfig(mode="internal_test", score_path=path, tau=0.44,
                                     bootstrap=quick_bootstrap()))
        block = report["tscore"]
        assert block["mae"] == 0.0
        assert block["pearson_r"]["point"] == pytest.approx(1.0)
        assert block["bland_altman"]["bias"] == 0.0

    def test_cis_bracket_their_points(self, external_scores_path):
        report = run_fixed(
            RunConfig(mode="external", score_path=external_scores_path, tau=0.44,
                      bootstrap=BootstrapConfig(replicates=400, seed=3))
        )
        screening = report["screening"]
        for name in ("auroc", "auprc", "brier"):
            entry = screening[name]
            assert entry["low"] <= entry["point"] <= entry["high"]
        for name, entry in screening["operating_point"].items():
            if entry["point"] is not None:
                assert entry["low"] <= entry["point"] <= entry["high"]

    def test_report_embeds_input_digest(self, external_scores_path):
        report = run_fixed(
            RunConfig(mode="external", score_path=external_scores_path, tau=0.44,
                      bootstrap=quick_bootstrap())
        )
        digest = report["run"]["inputs"]["scores"]["sha256"]
        assert len(digest) == 64


def _write_png(path, array):
    Image.fromarray(array, mode="L").save(path, format="PNG")


def _image_corpus(root, n=6, seed=0):
    rng = np.random.default_rng(seed)
    root.mkdir(parents=True, exist_ok=True)
    names = []
    for i in range(n):
        img = rng.integers(0, 256, (60 + i, 50 + i), dtype=np.uint8)
        name = f"img{i:02d}.png"
        _write_png(root / name, img)
        names.append(name)
    return names


class TestRunAudit:
    def _manifest(self, names, tmp_path, duplicate=False):
        records = []
        for i, name in enumerate(names):
            records.append(
                SampleRecord(
                    sample_id=f"a{i:02d}",
                    image_path=name,
                    split="train" if i % 2 == 0 else "test",
                    stage="stage1",
                    class_label=ClassLabel(i % 3),
                )
            )
        manifest = SplitManifest(records=tuple(records), provenance="audit-fixture")
        path = tmp_path / "audit_manifest.csv"
        write_manifest(manifest, path)
        return path

    def test_clean_corpus_has_no_findings(self, tmp_path):
        images = tmp_path / "images"
        names = _image_corpus(images, n=6, seed=21)
        manifest_path = self._manifest(names, tmp_path)
        outcome = run_audit(
            RunConfig(mode="develop", manifest_path=manifest_path, images_dir=images,
                      bootstrap=quick_bootstrap())
        )
        assert outcome.has_findings is False
        assert outcome.report["audit"]["leakage_pairs"] == []
        assert outcome.report["audit"]["unreadable"] == []

    def test_planted_duplicate_is_found_at_distance_zero(self, tmp_path):
        images = tmp_path / "images"
        names = _image_corpus(images, n=5, seed=22)
        # duplicate image 0's bytes under a new name in the other split
        clone = "clone.png"
        (images / clone).write_bytes((images / names[0]).read_bytes())
        records = [
            SampleRecord(sample_id="orig", image_path=names[0], split="train",
                         stage="stage1", class_label=ClassLabel.NORMAL),
            SampleRecord(sample_id="copy", image_path=clone, split="test",
                         stage="stage2", class_label=ClassLabel.NORMAL),
        ]
        manifest_path = tmp_path / "dup_manifest.csv"
        write_manifest(SplitManifest(records=tuple(records)), manifest_path)
        outcome = run_audit(
            RunConfig(mode="develop", manifest_path=manifest_path, images_dir=images,
                      bootstrap=quick_bootstrap())
        )
        assert outcome.has_findings
        assert outcome.report["audit"]["leakage_pairs"] == [
            {"sample_a": "copy", "sample_b": "orig", "split_a": "test",
             "split_b": "train", "distance": 0}
        ]

    def test_unreadable_image_listed_and_run_continues(self, tmp_path):
        images = tmp_path / "images"
        names = _image_corpus(images, n=3, seed=23)
        (images / names[1]).write_bytes(b"not a png")
        manifest_path = self._manifest(names, tmp_path)
        outcome = run_audit(
            RunConfig(mode="develop", manifest_path=manifest_path, images_dir=images,
                      bootstrap=quick_bootstrap())
        )
        unreadable = outcome.report["audit"]["unreadable"]
        assert [u["sample_id"] for u in unreadable] == ["a01"]

    def test_composition_only_run_without_images(self, tmp_path):
        names = [f"x{i}.png" for i in range(4)]
        manifest_path = self._manifest(names, tmp_path)
        outcome = run_audit(RunConfig(mode="develop", manifest_path=manifest_path,
                                      bootstrap=quick_bootstrap()))
        assert outcome.has_findings is False
        assert "composition" in outcome.report["audit"]


class TestCli:
    def test_preprocess_writes_pngs_and_manifest(self, tmp_path, capsys):
        source = tmp_path / "raw"
        names = _image_corpus(source, n=4, seed=31)
        out = tmp_path / "processed"
        code = main(["preprocess", "--in", str(source), "--out", str(out), "--size", "64"])
        assert code == 0
        for name in names:
            assert (out / name).exists()
            with Image.open(out / name) as img:
                assert img.size == (64, 64)
                assert img.mode == "L"
        lines = (out / "preprocess_manifest.jsonl").read_text().splitlines()
        entries = [json.loads(line) for line in lines]
        assert len(entries) == 4
        assert all("bbox" in e and "p_lo" in e for e in entries)

    def test_preprocess_deterministic_across_thread_counts(self, tmp_path, monkeypatch):
        source = tmp_path / "raw"
        _image_corpus(source, n=5, seed=32)
        digests = []
        for threads, label in (("1", "a"), ("4", "b")):
            out = tmp_path / f"out_{label}"
            monkeypatch.setenv("SCREENKIT_THREADS", threads)
            assert main(["preprocess", "--in", str(source), "--out", str(out)]) == 0
            digests.append(
                tuple(sorted((p.name, p.read_bytes()) for p in out.glob("*.png")))
            )
        assert digests[0] == digests[1]

    def test_audit_exit_codes(self, tmp_path):
        images = tmp_path / "images"
        names = _image_corpus(images, n=4, seed=33)
        records = [
            SampleRecord(sample_id=f"r{i}", image_path=n, split="train" if i < 2 else "test",
                         stage="stage1", class_label=ClassLabel(i % 3))
            for i, n in enumerate(names)
        ]
        manifest_path = tmp_path / "m.csv"
        write_manifest(SplitManifest(records=tuple(records)), manifest_path)
        report_path = tmp_path / "audit.json"
        code = main(["audit", "--manifest", str(manifest_path), "--images", str(images),
                     "--out", str(report_path)])
        assert code == 0
        assert report_path.exists()

        # plant a duplicate across splits and expect exit 3
        clone = "clone.png"
        (images / clone).write_bytes((images / names[0]).read_bytes())
        records.append(SampleRecord(sample_id="dup", image_path=clone, split="test",
                                    stage="stage1", class_label=ClassLabel.NORMAL))
        write_manifest(SplitManifest(records=tuple(records)), manifest_path)
        code = main(["audit", "--manifest", str(manifest_path), "--images", str(images),
                     "--out", str(report_path)])
        assert code == 3
        findings = json.loads(report_path.read_text())["audit"]["leakage_pairs"]
        assert {"dup", "r0"} == {findings[0]["sample_a"], findings[0]["sample_b"]}

    def test_select_threshold_prints_selection(self, development_scores_path, capsys):
        code = main(["select-threshold", "--scores", str(development_scores_path),
                     "--B", str(B)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["tau_star"] == 0.20
        assert payload["feasible"] is True

    def test_evaluate_defaults_to_shipped_tau(self, external_scores_path, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = main(["evaluate", "--scores", str(external_scores_path), "--mode", "external",
                     "--B", str(B), "--out", str(out)])
        assert code == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["tau"] == 0.44
        assert summary["confusion"] == {"tp": 24, "fp": 3, "fn": 6, "tn": 9}
        report = json.loads(out.read_text())
        assert report["run"]["mode"] == "external"

    def test_evaluate_missing_file_exits_2(self, tmp_path, capsys):
        code = main(["evaluate", "--scores", str(tmp_path / "missing.csv")])
        assert code == 2

    def test_single_class_validation_exits_2(self, tmp_path, capsys):
        rows = [
            ScoreRow(sample_id=f"v{i}", split="val", label_class=ClassLabel.OSTEOPENIA,
                     screen_prob=0.9)
            for i in range(4)
        ]
        path = tmp_path / "one_class.csv"
        write_score_table(rows, path)
        assert main(["select-threshold", "--scores", str(path)]) == 2

    def test_stats_bootstrap_cli(self, external_scores_path, capsys):
        code = main(["stats", "bootstrap", "--scores", str(external_scores_path),
                     "--metric", "auroc", "--B", str(B), "--seed", "42"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["metric"] == "auroc"
        assert payload["low"] <= payload["point"] <= payload["high"]

    def test_stats_bootstrap_regression_metric(self, external_scores_path, capsys):
        code = main(["stats", "bootstrap", "--scores", str(external_scores_path),
                     "--metric", "mae", "--B", str(B), "--seed", "42"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["point"] >= 0.0

    def test_stats_fisherz_cli(self, capsys):
        code = main(["stats", "fisherz", "--r", "0.801", "--n", "31"])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["low"] == pytest.approx(0.624, abs=1e-3)
        assert payload["high"] == pytest.approx(0.900, abs=1e-3)

    def test_stats_kw_cli(self, tmp_path, capsys):
        groups = tmp_path / "groups.csv"
        groups.write_text("group,value\na,1\na,2\nb,3\nb,4\n", encoding="utf-8")
        code = main(["stats", "kw", "--groups", str(groups)])
        assert code == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["h"] == pytest.approx(2.4)

    def test_evaluate_cli_is_deterministic(self, external_scores_path, tmp_path, capsys):
        outputs = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            assert main(["evaluate", "--scores", str(external_scores_path),
                         "--B", str(B), "--seed", "9", "--out", str(out)]) == 0
            outputs.append(out.read_bytes())
        capsys.readouterr()
        assert outputs[0] == outputs[1]
