"""MINDER: training-free AI-generated-image detection.

Images are scored by how far their foundation-model embeddings move under
pixel-space perturbations (Gaussian noise, Gaussian blur, contrastive
blur/sharpen pairs); channels combine through the minimum-distance rule so an
image passes as real if it is robust to at least one perturbation type.
"""

from .calibrate import Threshold, calibrate_threshold, decide
from .encoder import (
    Embedding,
    EncoderConfig,
    EncoderSession,
    encode,
    reference_encode,
)
from .errors import MinderError
from .evaluate import (
    EvalReport,
    L1ChannelSpec,
    PipelineConfig,
    auroc,
    jpeg_sweep,
    parameter_sweep,
    run_evaluation,
    score_corpus,
    score_image,
)
from .imagio import (
    CorpusManifest,
    ImageTensor,
    jpeg_recompress,
    load_image,
    scan_corpus,
)
from .perturb import (
    BlurKernel,
    PerturbationSpec,
    PerturbedSet,
    add_noise,
    apply,
    blur,
    blur_residual,
    build_kernel,
    sharpen,
)
from .scoring import (
    CombinerSpec,
    DecompositionFit,
    ScoreRecord,
    channel_distance,
    combine,
    cosine_distance,
    fit_contrastive_decomposition,
    l1_residual_score,
)
from .spectra import SpectrumMap, high_freq_energy, mean_spectrum

__version__ = "0.1.0"

__all__ = [
    "BlurKernel",
    "CombinerSpec",
    "CorpusManifest",
    "DecompositionFit",
    "Embedding",
    "EncoderConfig",
    "EncoderSession",
    "EvalReport",
    "ImageTensor",
    "L1ChannelSpec",
    "MinderError",
    "PerturbationSpec",
    "PerturbedSet",
    "PipelineConfig",
    "ScoreRecord",
    "SpectrumMap",
    "Threshold",
    "add_noise",
    "apply",
    "auroc",
    "blur",
    "blur_residual",
    "build_kernel",
    "calibrate_threshold",
    "channel_distance",
    "combine",
    "cosine_distance",
    "decide",
    "encode",
    "fit_contrastive_decomposition",
    "high_freq_energy",
    "jpeg_recompress",
    "jpeg_sweep",
    "l1_residual_score",
    "load_image",
    "mean_spectrum",
    "parameter_sweep",
    "reference_encode",
    "run_evaluation",
    "scan_corpus",
    "score_corpus",
    "score_image",
    "sharpen",
]
