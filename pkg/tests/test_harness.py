from __future__ import annotations

import json

import numpy as np
import pytest

from segbench import (
    EnsembleConfig,
    PredictorSpec,
    SegbenchError,
    SweepConfig,
    SweepReport,
    degradation_profile,
    emit_report,
    run_sweep,
    summarize_ensemble,
)
from segbench.harness import SweepRow, emit_summary

from conftest import write_gray_png, write_manifest, write_mask_png


def make_sweep_tree(tmp_path, n_entries=4, side=24, num_classes=3, seed=1234):
    """A small on-disk dataset: blocky ground-truth masks plus gray images."""
    rng = np.random.Generator(np.random.PCG64(seed))
    entries = []
    for i in range(n_entries):
        blocks = rng.integers(0, num_classes, size=(side // 4, side // 4)).astype(np.uint8)
        arr = np.kron(blocks, np.ones((4, 4), dtype=np.uint8))
        write_mask_png(tmp_path / f"gt_{i}.png", arr, num_classes)
        write_gray_png(tmp_path / f"img_{i}.png", side, side, 0.5)
        entries.append(
            {"id": f"e{i}", "image": f"img_{i}.png", "gt_mask": f"gt_{i}.png"}
        )
    return write_manifest(tmp_path / "manifest.json", entries)


def synthetic_config(manifest_path, **overrides):
    predictors = (
        PredictorSpec(name="alpha", base_flip_prob=0.05, noise_sensitivity=1.5, seed=1),
        PredictorSpec(name="beta", base_flip_prob=0.08, noise_sensitivity=1.0, seed=2),
        PredictorSpec(name="gamma", base_flip_prob=0.06, noise_sensitivity=2.0, seed=3),
    )
    kwargs = dict(
        manifest=str(manifest_path),
        predictors=predictors,
        ensemble=EnsembleConfig(member_names=("alpha", "beta", "gamma")),
        num_classes=3,
        master_seed=7,
        timestamp="2026-01-01T00:00:00+00:00",
    )
    kwargs.update(overrides)
    return SweepConfig(**kwargs)


class TestConfig:
    def test_round_trips_through_dict(self, tmp_path):
        cfg = synthetic_config(make_sweep_tree(tmp_path))
        again = SweepConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()

    def test_ensemble_members_must_be_predictors(self, tmp_path):
        with pytest.raises(SegbenchError, match="not among predictors"):
            synthetic_config(
                tmp_path / "m.json",
                ensemble=EnsembleConfig(member_names=("alpha", "delta")),
            )

    def test_reserved_predictor_name(self, tmp_path):
        with pytest.raises(SegbenchError, match="reserved"):
            SweepConfig(
                manifest="m.json",
                predictors=(PredictorSpec(name="ensemble"), "other"),
                ensemble=EnsembleConfig(member_names=("ensemble", "other")),
            )

    def test_digest_ignores_worker_count(self, tmp_path):
        cfg = synthetic_config(tmp_path / "m.json")
        assert cfg.digest() == cfg.with_worker_count(8).digest()

    def test_digest_tracks_master_seed(self, tmp_path):
        cfg = synthetic_config(tmp_path / "m.json")
        assert cfg.digest() != cfg.with_master_seed(99).digest()

    def test_load_resolves_manifest_relative_to_config(self, tmp_path):
        manifest = make_sweep_tree(tmp_path)
        payload = synthetic_config("manifest.json").to_dict()
        cfg_path = tmp_path / "config.json"
        cfg_path.write_text(json.dumps(payload), encoding="utf-8")
        cfg = SweepConfig.load(cfg_path)
        assert cfg.manifest_path() == manifest
        run_sweep(cfg)  # must find the files


class TestRunSweep:
    def test_full_grid_has_ten_rows(self, tmp_path):
        cfg = synthetic_config(make_sweep_tree(tmp_path))
        report = run_sweep(cfg)
        assert len(report.rows) == 1 + 3 * 3
        assert report.rows[0].noise_family is None
        families = {(r.noise_family, r.noise_level) for r in report.rows[1:]}
        assert len(families) == 9

    def test_baseline_only_when_no_families(self, tmp_path):
        cfg = synthetic_config(make_sweep_tree(tmp_path), noise_families=())
        report = run_sweep(cfg)
        assert len(report.rows) == 1

    def test_deterministic_across_runs(self, tmp_path):
        cfg = synthetic_config(make_sweep_tree(tmp_path))
        a = run_sweep(cfg)
        b = run_sweep(cfg)
        assert a.to_dict() == b.to_dict()

    def test_worker_count_does_not_change_results(self, tmp_path):
        manifest = make_sweep_tree(tmp_path, n_entries=6)
        serial = run_sweep(synthetic_config(manifest, worker_count=1))
        threaded = run_sweep(synthetic_config(manifest, worker_count=8))
        assert serial.to_dict() == threaded.to_dict()

    def test_baseline_dominates_noisy_cells(self, tmp_path):
        cfg = synthetic_config(make_sweep_tree(tmp_path, n_entries=6, side=32))
        report = run_sweep(cfg)
        baseline = report.baseline_row()
        for row in report.rows[1:]:
            for name, score in row.scores.items():
                assert score <= baseline.scores[name]

    def test_class_filter_restricts_scoring(self, tmp_path):
        manifest = make_sweep_tree(tmp_path)
        full = run_sweep(synthetic_config(manifest, noise_families=()))
        only0 = run_sweep(
            synthetic_config(manifest, noise_families=(), class_filter=(0,))
        )
        assert full.baseline_row().scores != only0.baseline_row().scores

    def test_external_prediction_sets(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(5))
        entries = []
        for i in range(2):
            arr = rng.integers(0, 2, size=(8, 8)).astype(np.uint8)
            write_mask_png(tmp_path / f"gt_{i}.png", arr, 2)
            write_gray_png(tmp_path / f"img_{i}.png", 8, 8)
            write_mask_png(tmp_path / f"pred_{i}.png", arr, 2)  # perfect clean preds
            noisy = arr.copy()
            noisy[0, :] = 1 - noisy[0, :]
            write_mask_png(tmp_path / f"pred_noisy_{i}.png", noisy, 2)
            entries.append(
                {
                    "id": f"e{i}",
                    "image": f"img_{i}.png",
                    "gt_mask": f"gt_{i}.png",
                    "predictions": {
                        "ext": f"pred_{i}.png",
                        "ext@gaussian:low": f"pred_noisy_{i}.png",
                    },
                }
            )
        manifest = write_manifest(tmp_path / "manifest.json", entries)
        cfg = SweepConfig(
            manifest=str(manifest),
            predictors=("ext", PredictorSpec(name="synth", base_flip_prob=0.1, seed=4)),
            ensemble=EnsembleConfig(member_names=("ext", "synth")),
            noise_families=("gaussian",),
            levels=("low",),
            num_classes=2,
            master_seed=1,
        )
        report = run_sweep(cfg)
        assert report.baseline_row().scores["ext"] == 1.0
        assert report.find_row("gaussian", "low").scores["ext"] < 1.0

    def test_missing_prediction_set_names_cell(self, tmp_path):
        rng = np.random.Generator(np.random.PCG64(5))
        arr = rng.integers(0, 2, size=(8, 8)).astype(np.uint8)
        write_mask_png(tmp_path / "gt.png", arr, 2)
        write_gray_png(tmp_path / "img.png", 8, 8)
        write_mask_png(tmp_path / "pred.png", arr, 2)
        manifest = write_manifest(
            tmp_path / "manifest.json",
            [{
                "id": "e0", "image": "img.png", "gt_mask": "gt.png",
                "predictions": {"ext": "pred.png"},
            }],
        )
        cfg = SweepConfig(
            manifest=str(manifest),
            predictors=("ext", PredictorSpec(name="synth", base_flip_prob=0.1)),
            ensemble=EnsembleConfig(member_names=("ext", "synth")),
            noise_families=("speckle",),
            levels=("high",),
            num_classes=2,
        )
        with pytest.raises(SegbenchError, match="ext@speckle:high"):
            run_sweep(cfg)

    def test_replicas_accumulate_more_pixels(self, tmp_path):
        manifest = make_sweep_tree(tmp_path, n_entries=2)
        one = run_sweep(synthetic_config(manifest, noise_families=(), replicas=1))
        three = run_sweep(synthetic_config(manifest, noise_families=(), replicas=3))
        # scores differ because three independent corruptions were scored
        assert one.baseline_row().scores != three.baseline_row().scores


class TestEmit:
    def make_report(self, tmp_path, **overrides):
        return run_sweep(synthetic_config(make_sweep_tree(tmp_path), **overrides))

    def test_csv_header_and_grid_shape(self, tmp_path):
        report = self.make_report(tmp_path)
        text = emit_report(report, "csv").decode()
        lines = text.strip().split("\n")
        assert lines[0] == "noise_type,noise_level,alpha,beta,gamma,ensemble"
        assert len(lines) == 1 + 10
        cells = [line.split(",") for line in lines]
        assert all(len(row) == 3 + 3 for row in cells)
        assert cells[1][0] == "none" and cells[1][1] == "none"

    def test_baseline_only_csv_is_header_plus_one_row(self, tmp_path):
        report = self.make_report(tmp_path, noise_families=())
        lines = emit_report(report, "csv").decode().strip().split("\n")
        assert len(lines) == 2

    def test_json_round_trip_is_byte_identical(self, tmp_path):
        report = self.make_report(tmp_path)
        blob = emit_report(report, "json")
        parsed = SweepReport.from_dict(json.loads(blob.decode()))
        assert emit_report(parsed, "json") == blob

    def test_markdown_renders_same_grid(self, tmp_path):
        report = self.make_report(tmp_path, noise_families=("gaussian",))
        text = emit_report(report, "markdown").decode()
        lines = text.strip().split("\n")
        assert lines[0].startswith("| noise_type | noise_level |")
        assert len(lines) == 2 + 1 + 3

    def test_unknown_format(self, tmp_path):
        report = self.make_report(tmp_path, noise_families=())
        with pytest.raises(SegbenchError, match="format"):
            emit_report(report, "xml")

    def test_undefined_cells_render_as_text(self):
        row = SweepRow(
            noise_family=None, noise_level=None, sigma=0.0,
            scores={"p": None}, ensemble_score=None,
        )
        report = SweepReport(predictor_names=("p",), rows=(row,), metadata={})
        text = emit_report(report, "csv").decode()
        assert "undefined" in text

    def test_summary_lists_members_then_ensemble(self, tmp_path):
        report = self.make_report(tmp_path, noise_families=())
        rows = summarize_ensemble(report)
        assert [name for name, _ in rows] == ["alpha", "beta", "gamma", "ensemble"]
        csv_text = emit_summary(report, "csv").decode()
        assert csv_text.startswith("predictor,miou\n")


class TestDegradationProfile:
    def rows_for(self, mious):
        sigmas = [0.0, 0.01, 0.05, 0.1]
        cells = [(None, None), ("gaussian", "low"), ("gaussian", "medium"), ("gaussian", "high")]
        rows = tuple(
            SweepRow(
                noise_family=f, noise_level=l, sigma=s,
                scores={"p": m}, ensemble_score=m,
            )
            for (f, l), s, m in zip(cells, sigmas, mious)
        )
        return SweepReport(predictor_names=("p",), rows=rows, metadata={})

    def test_constant_scores_have_zero_slope(self):
        profile = degradation_profile(self.rows_for([0.9, 0.9, 0.9, 0.9]))
        assert profile["p"]["gaussian"] == 0.0

    def test_hand_computed_slope(self):
        # oracle: closed-form OLS via polyfit on the same four points
        ys = [0.9, 0.88, 0.8, 0.7]
        expected = float(np.polyfit([0.0, 0.01, 0.05, 0.1], ys, 1)[0])
        assert expected == pytest.approx(-2.0, abs=1e-9)
        profile = degradation_profile(self.rows_for(ys))
        assert profile["p"]["gaussian"] == pytest.approx(expected, abs=1e-12)

    def test_missing_level_is_an_error(self):
        report = self.rows_for([0.9, 0.88, 0.8, 0.7])
        partial = SweepReport(
            predictor_names=("p",), rows=report.rows[:-1], metadata={}
        )
        with pytest.raises(SegbenchError, match="baseline plus all"):
            degradation_profile(partial)

    def test_sweep_profile_reports_every_family(self, tmp_path):
        cfg = synthetic_config(make_sweep_tree(tmp_path))
        profile = degradation_profile(run_sweep(cfg))
        assert set(profile) == {"alpha", "beta", "gamma", "ensemble"}
        for name in profile:
            assert set(profile[name]) == {"gaussian", "salt_pepper", "speckle"}
            for slope in profile[name].values():
                assert slope <= 0.0
