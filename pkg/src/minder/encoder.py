"""Embedding backends.

Two backends share one contract, (H, W, 3) float image in, fixed-dimension
vector out:

* ``reference`` — a deterministic built-in encoder (14x14 average pooling,
  a fixed seeded random projection to 384 dims, tanh) so the full scoring,
  calibration and evaluation stack is testable without model weights.
* ``graph_file`` — an ONNX graph with a single (N, 3, H, W) float32 input and
  a single (N, d) float32 output. Runs through onnxruntime when that package
  is installed, otherwise through the built-in NumPy executor, which covers
  the operator subset emitted by the companion export tool.

Per-channel mean/std normalization happens inside ``encode``; perturbations
upstream always operate on raw [0, 1] pixels.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BackendError, ConfigError, ModelLoadError, ShapeMismatch
from .imagio import ImageTensor

REFERENCE = "reference"
GRAPH_FILE = "graph_file"

REFERENCE_DIM = 384
_REFERENCE_INPUT = (224, 224)
_POOL = 14
_REFERENCE_PROJECTION_SEED = 1013904223

_projection_cache: np.ndarray | None = None


def _projection_matrix() -> np.ndarray:
    """768x384 random projection, generated once from a hard-coded seed."""
    global _projection_cache
    if _projection_cache is None:
        key = np.array([_REFERENCE_PROJECTION_SEED, 0], dtype=np.uint64)
        gen = np.random.Generator(np.random.Philox(key=key))
        grid = (_REFERENCE_INPUT[0] // _POOL) * (_REFERENCE_INPUT[1] // _POOL) * 3
        _projection_cache = gen.standard_normal((grid, REFERENCE_DIM)) / np.sqrt(grid)
        _projection_cache.setflags(write=False)
    return _projection_cache


@dataclass(frozen=True, eq=False)
class Embedding:
    """Fixed-dimension real vector produced by an encoder backend."""

    values: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 1:
            raise ValueError(f"embedding must be 1-D, got shape {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("embedding contains non-finite values")

    @property
    def dim(self) -> int:
        return self.values.shape[0]


def _reference_embed(arr: np.ndarray) -> np.ndarray:
    h, w = arr.shape[:2]
    gh, gw = h // _POOL, w // _POOL
    pooled = arr.reshape(gh, _POOL, gw, _POOL, 3).mean(axis=(1, 3))
    z = pooled.reshape(-1) @ _projection_matrix()
    return np.tanh(z)


def reference_encode(img: ImageTensor) -> Embedding:
    """Built-in deterministic encoder; requires 224x224 input."""
    if (img.height, img.width) != _REFERENCE_INPUT:
        raise ShapeMismatch(
            f"reference encoder expects {_REFERENCE_INPUT}, got {(img.height, img.width)}"
        )
    return Embedding(_reference_embed(img.data))


@dataclass(frozen=True)
class EncoderConfig:
    backend: str = REFERENCE
    model_path: str | None = None
    mean: tuple[float, float, float] = (0.0, 0.0, 0.0)
    std: tuple[float, float, float] = (1.0, 1.0, 1.0)
    input_size: tuple[int, int] = _REFERENCE_INPUT
    batch_size: int = 16

    def __post_init__(self):
        if self.backend not in (REFERENCE, GRAPH_FILE):
            raise ConfigError(f"unknown encoder backend {self.backend!r}")
        if self.backend == GRAPH_FILE and not self.model_path:
            raise ConfigError("graph_file backend requires model_path")
        if len(self.mean) != 3 or len(self.std) != 3:
            raise ConfigError("mean and std must each have 3 components")
        if any(s <= 0 for s in self.std):
            raise ConfigError("std components must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")

    def to_json_dict(self) -> dict:
        return {
            "backend": self.backend,
            "model_path": self.model_path,
            "mean": list(self.mean),
            "std": list(self.std),
            "input_size": list(self.input_size),
            "batch_size": self.batch_size,
        }

    @classmethod
    def from_json_dict(cls, rec: dict) -> "EncoderConfig":
        return cls(
            backend=rec.get("backend", REFERENCE),
            model_path=rec.get("model_path"),
            mean=tuple(rec.get("mean", (0.0, 0.0, 0.0))),
            std=tuple(rec.get("std", (1.0, 1.0, 1.0))),
            input_size=tuple(rec.get("input_size", _REFERENCE_INPUT)),
            batch_size=int(rec.get("batch_size", 16)),
        )


class _ReferenceBackend:
    dim = REFERENCE_DIM

    def __init__(self, cfg: EncoderConfig):
        if tuple(cfg.input_size) != _REFERENCE_INPUT:
            raise ShapeMismatch(
                f"reference backend supports input_size {_REFERENCE_INPUT} only"
            )

    def run(self, normalized: list[np.ndarray]) -> list[np.ndarray]:
        # one image at a time keeps results exactly batch-size independent
        return [_reference_embed(a) for a in normalized]


class _GraphFileBackend:
    """ONNX graph runner: onnxruntime when available, built-in executor otherwise."""

    def __init__(self, cfg: EncoderConfig):
        path = Path(cfg.model_path)
        if not path.is_file():
            raise ModelLoadError(f"model graph file not found: {path}")
        self._session = None
        self._model = None
        try:
            import onnxruntime as ort
        except ImportError:
            ort = None
        if ort is not None:
            try:
                self._session = ort.InferenceSession(
                    str(path), providers=["CPUExecutionProvider"]
                )
                self._input_name = self._session.get_inputs()[0].name
            except Exception as exc:
                raise ModelLoadError(f"onnxruntime failed to load {path}: {exc}") from exc
        else:
            from . import onnxlite

            try:
                self._model = onnxlite.read_model(path.read_bytes())
            except onnxlite.GraphFormatError as exc:
                raise ModelLoadError(f"cannot parse model graph {path}: {exc}") from exc
        self.dim: int | None = None

    def run(self, normalized: list[np.ndarray]) -> list[np.ndarray]:
        batch = np.stack(
            [np.transpose(a, (2, 0, 1)) for a in normalized], axis=0
        ).astype(np.float32)
        try:
            if self._session is not None:
                out = self._session.run(None, {self._input_name: batch})[0]
            else:
                from . import onnxlite

                out = onnxlite.run_model(self._model, batch)
        except ShapeMismatch:
            raise
        except Exception as exc:
            raise BackendError(f"graph inference failed: {exc}") from exc
        if out.ndim != 2 or out.shape[0] != batch.shape[0]:
            raise BackendError(f"graph returned shape {out.shape}, expected (N, d)")
        return [np.asarray(row, dtype=np.float64) for row in out]


@dataclass(eq=False)
class EncoderSession:
    """A loaded backend instance; immutable after construction, thread-shareable."""

    cfg: EncoderConfig
    _backend: object = field(init=False, repr=False)

    def __post_init__(self):
        if self.cfg.backend == REFERENCE:
            self._backend = _ReferenceBackend(self.cfg)
        else:
            self._backend = _GraphFileBackend(self.cfg)

    def encode(self, imgs: list[ImageTensor]) -> list[Embedding]:
        return encode(imgs, self.cfg, session=self)

    def _run(self, normalized: list[np.ndarray]) -> list[np.ndarray]:
        return self._backend.run(normalized)


def encode(
    imgs: list[ImageTensor], cfg: EncoderConfig, session: EncoderSession | None = None
) -> list[Embedding]:
    """Normalize per channel, run the backend, return embeddings in input order."""
    if not imgs:
        raise ValueError("encode requires a non-empty batch")
    size = tuple(cfg.input_size)
    for im in imgs:
        if (im.height, im.width) != size:
            raise ShapeMismatch(
                f"image is {(im.height, im.width)}, encoder expects {size}"
            )
    if session is None:
        session = EncoderSession(cfg)
    mean = np.asarray(cfg.mean, dtype=np.float64)
    std = np.asarray(cfg.std, dtype=np.float64)
    normalized = [(im.data - mean) / std for im in imgs]

    out: list[np.ndarray] = []
    for start in range(0, len(normalized), cfg.batch_size):
        out.extend(session._run(normalized[start : start + cfg.batch_size]))
    embeddings = [Embedding(v) for v in out]
    dims = {e.dim for e in embeddings}
    if len(dims) > 1:
        raise BackendError(f"backend produced mixed embedding dims: {sorted(dims)}")
    return embeddings
