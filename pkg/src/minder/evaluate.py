"""AUROC evaluation over labeled corpora, plus parameter and JPEG sweeps.

Per-image scoring is embarrassingly parallel; a worker pool maps over the
manifest and results always come back in manifest order, so outputs are
independent of the parallelism degree.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import imagio
from .calibrate import Threshold
from .encoder import EncoderConfig, EncoderSession, encode
from .errors import DecodeError, DegenerateImage, EmptySplit
from .imagio import CorpusManifest, ImageTensor, jpeg_recompress, load_image
from .perturb import CONTRASTIVE_BLUR, PerturbationSpec, apply, build_kernel
from .scoring import (
    CombinerSpec,
    ScoreRecord,
    channel_distance,
    combine,
    l1_residual_score,
    write_scores_csv,
)

L1_CHANNEL = "blur_l1"


def _midranks(values: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean rank of their run."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=np.float64)
    sorted_vals = values[order]
    i = 0
    while i < values.size:
        j = i
        while j + 1 < values.size and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def auroc(real_scores, fake_scores) -> float:
    """Rank-based AUROC with midrank tie handling.

    Equals the probability a random fake outscores a random real, counting
    ties as half.
    """
    real = np.asarray(list(real_scores), dtype=np.float64)
    fake = np.asarray(list(fake_scores), dtype=np.float64)
    if real.size == 0 or fake.size == 0:
        raise EmptySplit("AUROC needs at least one real and one fake score")
    pooled = np.concatenate([real, fake])
    ranks = _midranks(pooled)
    fake_rank_sum = float(ranks[real.size :].sum())
    n_r, n_f = real.size, fake.size
    return (fake_rank_sum - n_f * (n_f + 1) / 2.0) / (n_r * n_f)


def roc_points(real_scores, fake_scores) -> list[tuple[float, float]]:
    """(fpr, tpr) pairs swept over thresholds, from (0,0) to (1,1)."""
    real = np.sort(np.asarray(list(real_scores), dtype=np.float64))
    fake = np.sort(np.asarray(list(fake_scores), dtype=np.float64))
    if real.size == 0 or fake.size == 0:
        raise EmptySplit("ROC needs at least one real and one fake score")
    thresholds = np.unique(np.concatenate([real, fake]))[::-1]
    points = [(0.0, 0.0)]
    for t in thresholds:
        fpr = float(real.size - np.searchsorted(real, t, side="left")) / real.size
        tpr = float(fake.size - np.searchsorted(fake, t, side="left")) / fake.size
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return points


@dataclass(frozen=True)
class L1ChannelSpec:
    """Encoder-free channel: per-pixel mean absolute blur residual."""

    sigma_blur: float = 0.55
    name: str = L1_CHANNEL

    def to_json_dict(self) -> dict:
        return {"sigma_blur": self.sigma_blur, "name": self.name}

    @classmethod
    def from_json_dict(cls, rec: dict) -> "L1ChannelSpec":
        return cls(sigma_blur=float(rec["sigma_blur"]), name=rec.get("name", L1_CHANNEL))


@dataclass
class EvalReport:
    corpus_tag: str
    n_real: int
    n_fake: int
    auroc: float
    per_channel_auroc: dict[str, float]
    per_source: dict[str, float]
    config_fingerprint: str
    n_skipped: int = 0
    fpr_at_threshold: float | None = None
    tpr_at_threshold: float | None = None
    jpeg_quality: int | None = None

    def to_json_dict(self) -> dict:
        return {
            "corpus_tag": self.corpus_tag,
            "n_real": self.n_real,
            "n_fake": self.n_fake,
            "n_skipped": self.n_skipped,
            "auroc": self.auroc,
            "per_channel_auroc": dict(sorted(self.per_channel_auroc.items())),
            "per_source": dict(sorted(self.per_source.items())),
            "fpr_at_threshold": self.fpr_at_threshold,
            "tpr_at_threshold": self.tpr_at_threshold,
            "jpeg_quality": self.jpeg_quality,
            "config_fingerprint": self.config_fingerprint,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True, indent=2) + "\n"


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that determines a score: channels, combiner, encoder."""

    encoder: EncoderConfig
    perturbations: tuple[PerturbationSpec, ...]
    combiner: CombinerSpec
    l1_channel: L1ChannelSpec | None = None

    def __post_init__(self):
        names = [p.name for p in self.perturbations]
        if self.l1_channel is not None:
            names.append(self.l1_channel.name)
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate channel names: {names}")
        unknown = [c for c in self.combiner.channels if c not in names]
        if unknown:
            raise ValueError(f"combiner references undeclared channels: {unknown}")

    @property
    def channel_names(self) -> list[str]:
        names = [p.name for p in self.perturbations]
        if self.l1_channel is not None:
            names.append(self.l1_channel.name)
        return names

    def to_json_dict(self) -> dict:
        return {
            "encoder": self.encoder.to_json_dict(),
            "perturbations": [p.to_json_dict() for p in self.perturbations],
            "combiner": self.combiner.to_json_dict(),
            "l1_channel": self.l1_channel.to_json_dict() if self.l1_channel else None,
        }

    def fingerprint(self) -> str:
        canon = json.dumps(self.to_json_dict(), sort_keys=True).encode("utf-8")
        return hashlib.sha256(canon).hexdigest()


def score_image(
    img: ImageTensor,
    image_id: str,
    pipeline: PipelineConfig,
    session: EncoderSession,
    label: str | None = None,
) -> ScoreRecord:
    """Run every channel on one image and combine."""
    scores: dict[str, float] = {}
    original = None
    needs_original = any(s.kind != CONTRASTIVE_BLUR for s in pipeline.perturbations)
    if pipeline.perturbations and needs_original:
        original = encode([img], pipeline.encoder, session=session)[0]
    for spec in pipeline.perturbations:
        perturbed = apply(img, spec)
        scores[spec.name] = channel_distance(
            img, perturbed, pipeline.encoder, session=session, original=original
        )
    if pipeline.l1_channel is not None:
        kernel = build_kernel(pipeline.l1_channel.sigma_blur)
        raw = l1_residual_score(img, kernel)
        scores[pipeline.l1_channel.name] = raw / img.data.size
    record = ScoreRecord(image_id=image_id, channel_scores=scores, label=label)
    record.combined = combine(record, pipeline.combiner)
    record.validate()
    return record


def score_corpus(
    manifest: CorpusManifest,
    pipeline: PipelineConfig,
    jobs: int = 1,
    jpeg_quality: int | None = None,
) -> tuple[list[ScoreRecord], int]:
    """Score every manifest entry; undecodable images are skipped and counted."""
    session = EncoderSession(pipeline.encoder)
    size = tuple(pipeline.encoder.input_size)

    def task(entry):
        try:
            img = load_image(manifest.resolve(entry), target_size=size)
        except (DecodeError, DegenerateImage, FileNotFoundError):
            return None
        if jpeg_quality is not None:
            img = jpeg_recompress(img, jpeg_quality)
        return score_image(img, entry.path, pipeline, session, label=entry.label)

    if jobs <= 1:
        results = [task(e) for e in manifest.entries]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(task, manifest.entries))
    records = [r for r in results if r is not None]
    return records, len(results) - len(records)


def _split_scores(records: list[ScoreRecord], key=lambda r: r.combined):
    real = [key(r) for r in records if r.label == imagio.REAL]
    fake = [key(r) for r in records if r.label == imagio.FAKE]
    return real, fake


def build_report(
    records: list[ScoreRecord],
    pipeline: PipelineConfig,
    manifest: CorpusManifest,
    corpus_tag: str,
    n_skipped: int = 0,
    threshold: Threshold | None = None,
    jpeg_quality: int | None = None,
) -> EvalReport:
    real, fake = _split_scores(records)
    if not real or not fake:
        raise EmptySplit("evaluation needs scored images with both labels")
    per_channel = {}
    for name in pipeline.channel_names:
        r, f = _split_scores(records, key=lambda rec, n=name: rec.channel_scores[n])
        per_channel[name] = auroc(r, f)

    tags = {e.path: e.source_tag for e in manifest.entries}
    per_source: dict[str, float] = {}
    fake_tags = sorted(
        {tags.get(r.image_id, "") for r in records if r.label == imagio.FAKE} - {""}
    )
    for tag in fake_tags:
        tagged = [
            r.combined
            for r in records
            if r.label == imagio.FAKE and tags.get(r.image_id, "") == tag
        ]
        per_source[tag] = auroc(real, tagged)

    fpr = tpr = None
    if threshold is not None:
        fpr = float(np.mean([s >= threshold.epsilon for s in real]))
        tpr = float(np.mean([s >= threshold.epsilon for s in fake]))

    return EvalReport(
        corpus_tag=corpus_tag,
        n_real=len(real),
        n_fake=len(fake),
        auroc=auroc(real, fake),
        per_channel_auroc=per_channel,
        per_source=per_source,
        config_fingerprint=pipeline.fingerprint(),
        n_skipped=n_skipped,
        fpr_at_threshold=fpr,
        tpr_at_threshold=tpr,
        jpeg_quality=jpeg_quality,
    )


def run_evaluation(
    manifest: CorpusManifest,
    pipeline: PipelineConfig,
    corpus_tag: str = "corpus",
    jobs: int = 1,
    threshold: Threshold | None = None,
    jpeg_quality: int | None = None,
) -> tuple[EvalReport, list[ScoreRecord]]:
    """Score a labeled corpus and assemble the report."""
    if manifest.count(imagio.REAL) == 0 or manifest.count(imagio.FAKE) == 0:
        raise EmptySplit("manifest must contain both real and fake entries")
    records, n_skipped = score_corpus(
        manifest, pipeline, jobs=jobs, jpeg_quality=jpeg_quality
    )
    report = build_report(
        records,
        pipeline,
        manifest,
        corpus_tag,
        n_skipped=n_skipped,
        threshold=threshold,
        jpeg_quality=jpeg_quality,
    )
    return report, records


def jpeg_sweep(
    manifest: CorpusManifest,
    qualities: list[int],
    pipeline: PipelineConfig,
    corpus_tag: str = "corpus",
    jobs: int = 1,
) -> list[EvalReport]:
    """Re-run the evaluation with every image recompressed at each quality."""
    if not qualities:
        raise ValueError("qualities list must be non-empty")
    for q in qualities:
        if not 1 <= int(q) <= 100:
            raise ValueError(f"JPEG quality must be in [1, 100], got {q}")
    reports = []
    for q in qualities:
        report, _ = run_evaluation(
            manifest,
            pipeline,
            corpus_tag=corpus_tag,
            jobs=jobs,
            jpeg_quality=int(q),
        )
        reports.append(report)
    return reports


def parameter_sweep(
    manifest: CorpusManifest,
    sigma_grid: list[float],
    kind: str,
    pipeline: PipelineConfig,
    corpus_tag: str = "corpus",
    jobs: int = 1,
) -> list[tuple[float, EvalReport]]:
    """One single-channel evaluation per sigma in the grid."""
    if not sigma_grid:
        raise ValueError("sigma grid must be non-empty")
    base = pipeline.perturbations[0].seed if pipeline.perturbations else 2024
    rows = []
    for sigma in sigma_grid:
        if kind == "gaussian_noise":
            spec = PerturbationSpec(
                kind=kind, sigma_noise=float(sigma), n_samples=3, seed=base
            )
        else:
            spec = PerturbationSpec(kind=kind, sigma_blur=float(sigma), seed=base)
        swept = PipelineConfig(
            encoder=pipeline.encoder,
            perturbations=(spec,),
            combiner=CombinerSpec(mode="single", channels=(spec.name,)),
        )
        report, _ = run_evaluation(manifest, swept, corpus_tag=corpus_tag, jobs=jobs)
        rows.append((float(sigma), report))
    return rows


def sweep_csv(rows: list[tuple[float, EvalReport]], param_name: str = "sigma") -> str:
    lines = [f"{param_name},auroc,n_real,n_fake"]
    for value, report in rows:
        lines.append(f"{value!r},{report.auroc!r},{report.n_real},{report.n_fake}")
    return "\n".join(lines) + "\n"


def roc_csv(points: list[tuple[float, float]]) -> str:
    lines = ["fpr,tpr"] + [f"{fpr!r},{tpr!r}" for fpr, tpr in points]
    return "\n".join(lines) + "\n"


def scores_csv(records: list[ScoreRecord], pipeline: PipelineConfig) -> str:
    return write_scores_csv(records, pipeline.channel_names)
