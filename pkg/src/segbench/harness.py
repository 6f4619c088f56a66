"""The robustness sweep: noise family x level x predictor, plus ensemble.

Every cell is evaluated over the identical test set. Per-cell seeds derive
from (master_seed, family, level, entry id, replica), and per-predictor
corruption seeds from (master_seed, predictor, entry id, replica) - note no
family or level - so severities are paired and results are bit-identical
for any worker count. Report rows mirror the robustness-table layout:
one clean baseline row plus one row per requested (family, level).
"""

from __future__ import annotations

import csv
import datetime
import hashlib
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from ._version import __version__
from .dataset import DatasetManifest, ManifestEntry, load_manifest
from .ensemble import EnsembleConfig, majority_vote
from .exceptions import SegbenchError
from .masks import LabelMask, infer_num_classes, load_mask
from .metrics import ConfusionMatrix, accumulate, merge, miou
from .noise import NOISE_FAMILIES, NOISE_LEVELS, NoiseSpec, resolve_level
from .seeding import derive_seed
from .synth import PredictorSpec, predict

ENSEMBLE_COLUMN = "ensemble"
BASELINE_TOKEN = "none"


@dataclass(frozen=True)
class SweepConfig:
    """Everything a sweep needs; serializable to/from JSON.

    base_dir anchors the (possibly relative) manifest path and is excluded
    from serialization and the digest, so a config file means the same
    experiment wherever the tree is checked out.
    """

    manifest: str
    predictors: tuple
    ensemble: EnsembleConfig
    noise_families: tuple = NOISE_FAMILIES
    levels: tuple = NOISE_LEVELS
    num_classes: int | None = None
    class_filter: tuple | None = None
    master_seed: int = 0
    worker_count: int = 1
    replicas: int = 1
    timestamp: str | None = None
    base_dir: str | None = None

    def __post_init__(self) -> None:
        if not self.predictors:
            raise SegbenchError("sweep needs at least one predictor")
        names = self.predictor_names()
        if len(set(names)) != len(names):
            raise SegbenchError("predictor names must be unique")
        for name in names:
            if name == ENSEMBLE_COLUMN:
                raise SegbenchError(f"predictor name {ENSEMBLE_COLUMN!r} is reserved")
            if any(ch in name for ch in ",@:\n"):
                raise SegbenchError(f"predictor name {name!r} contains a reserved character")
        missing = set(self.ensemble.member_names) - set(names)
        if missing:
            raise SegbenchError(f"ensemble members not among predictors: {sorted(missing)}")
        for family in self.noise_families:
            if family not in NOISE_FAMILIES:
                raise SegbenchError(f"unknown noise family {family!r}")
        for level in self.levels:
            if level not in NOISE_LEVELS:
                raise SegbenchError(f"unknown noise level {level!r}")
        if self.worker_count < 1:
            raise SegbenchError("worker_count must be >= 1")
        if self.replicas < 1:
            raise SegbenchError("replicas must be >= 1")

    def predictor_names(self) -> list[str]:
        return [p.name if isinstance(p, PredictorSpec) else str(p) for p in self.predictors]

    def to_dict(self) -> dict:
        return {
            "manifest": self.manifest,
            "predictors": [
                p.to_dict() if isinstance(p, PredictorSpec) else p for p in self.predictors
            ],
            "ensemble": self.ensemble.to_dict(),
            "noise_families": list(self.noise_families),
            "levels": list(self.levels),
            "num_classes": self.num_classes,
            "class_filter": sorted(self.class_filter) if self.class_filter else None,
            "master_seed": self.master_seed,
            "worker_count": self.worker_count,
            "replicas": self.replicas,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, payload: dict, base_dir: str | None = None) -> "SweepConfig":
        predictors = tuple(
            PredictorSpec.from_dict(p) if isinstance(p, dict) else str(p)
            for p in payload["predictors"]
        )
        raw_filter = payload.get("class_filter")
        return cls(
            manifest=str(payload["manifest"]),
            predictors=predictors,
            ensemble=EnsembleConfig.from_dict(payload["ensemble"]),
            noise_families=tuple(payload.get("noise_families", NOISE_FAMILIES)),
            levels=tuple(payload.get("levels", NOISE_LEVELS)),
            num_classes=payload.get("num_classes"),
            class_filter=tuple(raw_filter) if raw_filter else None,
            master_seed=int(payload.get("master_seed", 0)),
            worker_count=int(payload.get("worker_count", 1)),
            replicas=int(payload.get("replicas", 1)),
            timestamp=payload.get("timestamp"),
            base_dir=base_dir,
        )

    @classmethod
    def load(cls, path: str | Path) -> "SweepConfig":
        path = Path(path)
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise SegbenchError(f"sweep config not found: {path}")
        except json.JSONDecodeError as exc:
            raise SegbenchError(f"sweep config {path} is not valid JSON: {exc}")
        return cls.from_dict(payload, base_dir=str(path.parent))

    def manifest_path(self) -> Path:
        path = Path(self.manifest)
        if not path.is_absolute() and self.base_dir is not None:
            path = Path(self.base_dir) / path
        return path

    def with_master_seed(self, seed: int) -> "SweepConfig":
        payload = self.to_dict()
        payload["master_seed"] = seed
        return SweepConfig.from_dict(payload, base_dir=self.base_dir)

    def with_worker_count(self, worker_count: int) -> "SweepConfig":
        payload = self.to_dict()
        payload["worker_count"] = worker_count
        return SweepConfig.from_dict(payload, base_dir=self.base_dir)

    def digest(self) -> str:
        # worker_count is an execution detail, not part of the experiment
        # identity: reports must be byte-identical across worker counts.
        payload = self.to_dict()
        payload.pop("worker_count")
        canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SweepRow:
    """Scores for one (family, level) cell; family/level None = baseline."""

    noise_family: str | None
    noise_level: str | None
    sigma: float
    scores: dict
    ensemble_score: float | None

    def to_dict(self) -> dict:
        return {
            "noise_family": self.noise_family,
            "noise_level": self.noise_level,
            "sigma": self.sigma,
            "scores": dict(self.scores),
            "ensemble": self.ensemble_score,
        }


@dataclass(frozen=True)
class SweepReport:
    predictor_names: tuple
    rows: tuple
    metadata: dict

    def baseline_row(self) -> SweepRow:
        for row in self.rows:
            if row.noise_family is None:
                return row
        raise SegbenchError("report has no baseline row")

    def find_row(self, family: str, level: str) -> SweepRow:
        for row in self.rows:
            if row.noise_family == family and row.noise_level == level:
                return row
        raise SegbenchError(f"report has no cell for {family}:{level}")

    def to_dict(self) -> dict:
        return {
            "metadata": dict(self.metadata),
            "predictors": list(self.predictor_names),
            "rows": [r.to_dict() for r in self.rows],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "SweepReport":
        rows = tuple(
            SweepRow(
                noise_family=r["noise_family"],
                noise_level=r["noise_level"],
                sigma=r["sigma"],
                scores=dict(r["scores"]),
                ensemble_score=r["ensemble"],
            )
            for r in payload["rows"]
        )
        return cls(
            predictor_names=tuple(payload["predictors"]),
            rows=rows,
            metadata=dict(payload["metadata"]),
        )


def _external_mask_path(
    entry: ManifestEntry, name: str, family: str | None, level: str | None
) -> Path:
    key = name if family is None else f"{name}@{family}:{level}"
    if key not in entry.predictions:
        raise SegbenchError(
            f"entry {entry.id!r} has no prediction set {key!r} for the requested cell"
        )
    return entry.predictions[key]


def _evaluate_entry(
    entry: ManifestEntry,
    gt: LabelMask,
    config: SweepConfig,
    num_classes: int,
    family: str | None,
    level: str | None,
) -> tuple[list[ConfusionMatrix], ConfusionMatrix]:
    """Per-predictor and ensemble matrix contributions of one entry."""
    names = config.predictor_names()
    per_pred = [ConfusionMatrix.zeros(num_classes) for _ in names]
    ens = ConfusionMatrix.zeros(num_classes)
    member_index = {n: i for i, n in enumerate(names)}

    for replica in range(config.replicas):
        masks: list[LabelMask] = []
        for predictor in config.predictors:
            if isinstance(predictor, PredictorSpec):
                noise = None
                if family is not None:
                    noise_seed = derive_seed(
                        config.master_seed, "noise", family, level, entry.id, replica
                    )
                    noise = NoiseSpec.from_level(family, level, noise_seed)
                entry_seed = derive_seed(
                    config.master_seed, "predictor", predictor.name,
                    predictor.seed, entry.id, replica,
                )
                masks.append(predict(predictor.with_seed(entry_seed), gt, noise))
            else:
                path = _external_mask_path(entry, predictor, family, level)
                masks.append(load_mask(path, num_classes=num_classes))
        for i, mask in enumerate(masks):
            per_pred[i] = accumulate(per_pred[i], mask, gt)
        member_masks = [masks[member_index[n]] for n in config.ensemble.member_names]
        fused = majority_vote(member_masks, config.ensemble)
        ens = accumulate(ens, fused, gt)
    return per_pred, ens


def run_sweep(config: SweepConfig) -> SweepReport:
    """Evaluate every requested cell plus the clean baseline.

    Deterministic in master_seed; bit-identical for any worker_count
    (entries are evaluated independently and merged in manifest order).
    """
    manifest = load_manifest(config.manifest_path())
    if not manifest.entries:
        raise SegbenchError("manifest has no entries")

    gt_masks = {}
    for entry in manifest.entries:
        gt_masks[entry.id] = load_mask(entry.gt_mask)
    num_classes = config.num_classes
    if num_classes is None:
        num_classes = max(infer_num_classes(m.labels) for m in gt_masks.values())
    gt_masks = {
        entry_id: LabelMask(labels=m.labels, num_classes=num_classes)
        for entry_id, m in gt_masks.items()
    }

    cells: list[tuple[str | None, str | None, float]] = [(None, None, 0.0)]
    for family in config.noise_families:
        for level in config.levels:
            cells.append((family, level, resolve_level(level)))

    names = config.predictor_names()
    class_filter = set(config.class_filter) if config.class_filter else None
    rows = []
    for family, level, sigma in cells:
        def entry_task(entry: ManifestEntry, family=family, level=level):
            return _evaluate_entry(
                entry, gt_masks[entry.id], config, num_classes, family, level
            )

        if config.worker_count == 1:
            results = [entry_task(e) for e in manifest.entries]
        else:
            with ThreadPoolExecutor(max_workers=config.worker_count) as pool:
                results = list(pool.map(entry_task, manifest.entries))

        totals = [ConfusionMatrix.zeros(num_classes) for _ in names]
        ens_total = ConfusionMatrix.zeros(num_classes)
        for per_pred, ens in results:
            totals = [merge(t, m) for t, m in zip(totals, per_pred)]
            ens_total = merge(ens_total, ens)
        scores = {name: miou(totals[i], class_filter) for i, name in enumerate(names)}
        rows.append(
            SweepRow(
                noise_family=family,
                noise_level=level,
                sigma=sigma,
                scores=scores,
                ensemble_score=miou(ens_total, class_filter),
            )
        )

    timestamp = config.timestamp
    if timestamp is None:
        timestamp = (
            datetime.datetime.now(datetime.timezone.utc)
            .replace(microsecond=0)
            .isoformat()
        )
    metadata = {
        "config_digest": config.digest(),
        "master_seed": config.master_seed,
        "timestamp": timestamp,
        "version": __version__,
    }
    return SweepReport(predictor_names=tuple(names), rows=tuple(rows), metadata=metadata)


def _cell_text(value: float | None) -> str:
    return "undefined" if value is None else repr(value)


def emit_report(report: SweepReport, fmt: str) -> bytes:
    """Render the report grid as csv, markdown, or lossless json."""
    if fmt == "json":
        return (json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n").encode("utf-8")
    header = ["noise_type", "noise_level", *report.predictor_names, ENSEMBLE_COLUMN]
    grid = [header]
    for row in report.rows:
        grid.append(
            [
                row.noise_family if row.noise_family is not None else BASELINE_TOKEN,
                row.noise_level if row.noise_level is not None else BASELINE_TOKEN,
                *[_cell_text(row.scores[n]) for n in report.predictor_names],
                _cell_text(row.ensemble_score),
            ]
        )
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerows(grid)
        return buf.getvalue().encode("utf-8")
    if fmt == "markdown":
        lines = ["| " + " | ".join(header) + " |"]
        lines.append("|" + "|".join([" --- "] * len(header)) + "|")
        for row in grid[1:]:
            lines.append("| " + " | ".join(row) + " |")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise SegbenchError(f"unknown report format {fmt!r} (want csv, json, or markdown)")


def summarize_ensemble(report: SweepReport) -> list[tuple[str, float | None]]:
    """Baseline member scores plus the ensembled score, table-ready."""
    baseline = report.baseline_row()
    rows = [(name, baseline.scores[name]) for name in report.predictor_names]
    rows.append((ENSEMBLE_COLUMN, baseline.ensemble_score))
    return rows


def emit_summary(report: SweepReport, fmt: str) -> bytes:
    rows = summarize_ensemble(report)
    if fmt == "json":
        payload = {name: score for name, score in rows}
        return (json.dumps(payload, sort_keys=True, indent=2) + "\n").encode("utf-8")
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["predictor", "miou"])
        for name, score in rows:
            writer.writerow([name, _cell_text(score)])
        return buf.getvalue().encode("utf-8")
    if fmt == "markdown":
        lines = ["| predictor | miou |", "| --- | --- |"]
        for name, score in rows:
            lines.append(f"| {name} | {_cell_text(score)} |")
        return ("\n".join(lines) + "\n").encode("utf-8")
    raise SegbenchError(f"unknown summary format {fmt!r} (want csv, json, or markdown)")


def _ols_slope(xs: list[float], ys: list[float]) -> float:
    n = len(xs)
    mx = sum(xs) / n
    my = sum(ys) / n
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    sxx = sum((x - mx) ** 2 for x in xs)
    return sxy / sxx


def degradation_profile(report: SweepReport) -> dict:
    """Least-squares slope of mIOU versus sigma, per predictor per family.

    Requires the baseline and all three levels for each family present in
    the report. The ensemble's slope is reported under "ensemble".
    """
    baseline = report.baseline_row()
    families = sorted(
        {row.noise_family for row in report.rows if row.noise_family is not None}
    )
    profile: dict = {name: {} for name in (*report.predictor_names, ENSEMBLE_COLUMN)}
    for family in families:
        points: list[tuple[float, SweepRow]] = [(0.0, baseline)]
        for level in NOISE_LEVELS:
            try:
                row = report.find_row(family, level)
            except SegbenchError:
                raise SegbenchError(
                    f"degradation profile needs baseline plus all of {NOISE_LEVELS} "
                    f"for family {family!r}"
                )
            points.append((resolve_level(level), row))
        xs = [x for x, _ in points]
        for name in report.predictor_names:
            ys = [row.scores[name] for _, row in points]
            if any(y is None for y in ys):
                raise SegbenchError(f"undefined mIOU for {name!r} in family {family!r}")
            profile[name][family] = _ols_slope(xs, ys)
        ys = [row.ensemble_score for _, row in points]
        if any(y is None for y in ys):
            raise SegbenchError(f"undefined ensemble mIOU in family {family!r}")
        profile[ENSEMBLE_COLUMN][family] = _ols_slope(xs, ys)
    return profile
