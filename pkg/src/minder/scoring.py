"""Detector scores: embedding sensitivity distances, the encoder-free l1
blur-residual score, channel combiners, and the blur/sharpen distance
decomposition diagnostic.

Score orientation is "higher means more likely fake" throughout.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .encoder import Embedding, EncoderConfig, EncoderSession, encode
from .errors import (
    DimensionMismatch,
    MissingChannel,
    RankDeficient,
    ZeroVector,
)
from .imagio import ImageTensor
from .perturb import BlurKernel, PerturbedSet, blur_residual

SINGLE = "single"
MIN = "min"
MAX = "max"


def cosine_distance(a: Embedding, b: Embedding) -> float:
    """1 - cos(a, b), in [0, 2]."""
    if a.dim != b.dim:
        raise DimensionMismatch(f"embedding dims differ: {a.dim} vs {b.dim}")
    na = float(np.linalg.norm(a.values))
    nb = float(np.linalg.norm(b.values))
    if na == 0.0 or nb == 0.0:
        raise ZeroVector("cosine distance undefined for an all-zero embedding")
    cos = float(np.dot(a.values, b.values)) / (na * nb)
    return 1.0 - max(-1.0, min(1.0, cos))


def channel_distance(
    img: ImageTensor,
    perturbed: PerturbedSet,
    enc: EncoderConfig,
    session: EncoderSession | None = None,
    original: Embedding | None = None,
) -> float:
    """Embedding distance for one perturbation channel.

    Pair sets score the distance between the two variants' embeddings (the
    original is not encoded); everything else returns the mean distance from
    the original to each variant.
    """
    if session is None:
        session = EncoderSession(enc)
    if perturbed.pair_mode:
        if len(perturbed.variants) != 2:
            raise ValueError("pair_mode set requires exactly two variants")
        first, second = encode(list(perturbed.variants), enc, session=session)
        return cosine_distance(first, second)
    if original is None:
        original = encode([img], enc, session=session)[0]
    variant_embs = encode(list(perturbed.variants), enc, session=session)
    distances = [cosine_distance(original, v) for v in variant_embs]
    return float(np.mean(distances))


def l1_residual_score(img: ImageTensor, kernel: BlurKernel) -> float:
    """Sum of absolute blur-residual values over all pixels and channels.

    No encoder involved; this is the frequency-artifact detector on its own.
    """
    return float(np.abs(blur_residual(img, kernel)).sum())


@dataclass
class ScoreRecord:
    """Per-image channel distances plus the combined detector score."""

    image_id: str
    channel_scores: dict[str, float]
    combined: float = float("nan")
    label: str | None = None

    def validate(self):
        if not self.channel_scores:
            raise ValueError("channel_scores must be non-empty")
        if not np.isfinite(self.combined):
            raise ValueError("combined score must be finite")


@dataclass(frozen=True)
class CombinerSpec:
    mode: str = SINGLE
    channels: tuple[str, ...] = ()

    def __post_init__(self):
        if self.mode not in (SINGLE, MIN, MAX):
            raise ValueError(f"unknown combiner mode {self.mode!r}")
        if self.mode == SINGLE and len(self.channels) != 1:
            raise ValueError("single combiner takes exactly one channel")
        if self.mode in (MIN, MAX) and len(self.channels) < 2:
            raise ValueError(f"{self.mode} combiner needs at least two channels")

    def to_json_dict(self) -> dict:
        return {"mode": self.mode, "channels": list(self.channels)}

    @classmethod
    def from_json_dict(cls, rec: dict) -> "CombinerSpec":
        return cls(mode=rec["mode"], channels=tuple(rec["channels"]))


def combine(record: ScoreRecord, spec: CombinerSpec) -> float:
    """min / max / passthrough over the named channels of a record."""
    try:
        values = [record.channel_scores[name] for name in spec.channels]
    except KeyError as exc:
        raise MissingChannel(
            f"record {record.image_id!r} lacks channel {exc.args[0]!r}"
        ) from exc
    if spec.mode == SINGLE:
        return float(values[0])
    if spec.mode == MIN:
        return float(min(values))
    return float(max(values))


@dataclass(frozen=True)
class DecompositionFit:
    """Least-squares coefficients for contrastive ~ alpha*blur + beta*sharpen + gamma."""

    alpha: float
    beta: float
    gamma: float
    residual_rms: float
    n: int


def fit_contrastive_decomposition(
    records: list[tuple[float, float, float]],
) -> DecompositionFit:
    """OLS fit of the pair distance on (blur distance, sharpen distance, 1).

    Each record is (contrastive, blur, sharpen). Raises RankDeficient when the
    design matrix has rank < 3.
    """
    if len(records) < 3:
        raise RankDeficient(f"need at least 3 records, got {len(records)}")
    arr = np.asarray(records, dtype=np.float64)
    y = arr[:, 0]
    design = np.column_stack([arr[:, 1], arr[:, 2], np.ones(len(arr))])
    if np.linalg.matrix_rank(design) < 3:
        raise RankDeficient("design matrix (blur, sharpen, 1) is rank deficient")
    coef, _, _, _ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    return DecompositionFit(
        alpha=float(coef[0]), beta=float(coef[1]), gamma=float(coef[2]),
        residual_rms=rms, n=len(records),
    )


def scores_csv_header(channel_names: list[str]) -> list[str]:
    return ["image_id", "label"] + [f"channel:{n}" for n in channel_names] + ["combined"]


def write_scores_csv(records: list[ScoreRecord], channel_names: list[str]) -> str:
    """Render records as CSV with one channel:<name> column per channel."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(scores_csv_header(channel_names))
    for rec in records:
        row = [rec.image_id, rec.label or ""]
        row += [repr(rec.channel_scores[name]) for name in channel_names]
        row.append(repr(rec.combined))
        writer.writerow(row)
    return buf.getvalue()


def read_scores_csv(text: str) -> tuple[list[ScoreRecord], list[str]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    channel_names = [h.split(":", 1)[1] for h in header if h.startswith("channel:")]
    records = []
    for row in reader:
        if not row:
            continue
        scores = {name: float(v) for name, v in zip(channel_names, row[2:-1])}
        records.append(
            ScoreRecord(
                image_id=row[0],
                label=row[1] or None,
                channel_scores=scores,
                combined=float(row[-1]),
            )
        )
    return records, channel_names
