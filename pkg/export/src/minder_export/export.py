"""Export pipeline: torch module -> ONNX graph file + manifest, with a
numerical parity check of the exported graph against the source model."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from minder.encoder import EncoderConfig, encode
from minder.imagio import ImageTensor
from minder.onnxlite import write_model

from .errors import ParityFailure
from .registry import RegistryEntry, load_pretrained, lookup
from .vit import CLASS_TOKEN, build_vit_graph, source_embeddings

PARITY_PROBES = 8
PARITY_MIN_COSINE = 0.999


@dataclass(frozen=True)
class ExportManifest:
    model_name: str
    output_path: str
    embedding_dim: int
    input_size: tuple[int, int]
    mean: tuple[float, float, float]
    std: tuple[float, float, float]
    output_head: str

    def to_json(self) -> str:
        rec = {
            "model_name": self.model_name,
            "output_path": self.output_path,
            "embedding_dim": self.embedding_dim,
            "input_size": list(self.input_size),
            "mean": list(self.mean),
            "std": list(self.std),
            "output_head": self.output_head,
        }
        return json.dumps(rec, sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExportManifest":
        rec = json.loads(text)
        return cls(
            model_name=rec["model_name"],
            output_path=rec["output_path"],
            embedding_dim=int(rec["embedding_dim"]),
            input_size=tuple(rec["input_size"]),
            mean=tuple(rec["mean"]),
            std=tuple(rec["std"]),
            output_head=rec["output_head"],
        )

    def encoder_config(self, batch_size: int = 16) -> EncoderConfig:
        return EncoderConfig(
            backend="graph_file",
            model_path=self.output_path,
            mean=self.mean,
            std=self.std,
            input_size=self.input_size,
            batch_size=batch_size,
        )


def _probe_images(input_size, n: int) -> list[ImageTensor]:
    key = np.array([0x9E3779B9, 0], dtype=np.uint64)
    gen = np.random.Generator(np.random.Philox(key=key))
    return [
        ImageTensor(gen.random((input_size[0], input_size[1], 3)))
        for _ in range(n)
    ]


def parity_check(
    module,
    manifest: ExportManifest,
    n_probes: int = PARITY_PROBES,
    min_cosine: float = PARITY_MIN_COSINE,
) -> list[float]:
    """Compare graph-file embeddings against source-framework embeddings on
    random probe inputs; raises ParityFailure below the cosine floor."""
    probes = _probe_images(manifest.input_size, n_probes)
    graph_embs = encode(probes, manifest.encoder_config())

    mean = torch.tensor(manifest.mean, dtype=torch.float32).view(1, 3, 1, 1)
    std = torch.tensor(manifest.std, dtype=torch.float32).view(1, 3, 1, 1)
    batch = torch.stack(
        [torch.from_numpy(p.data.transpose(2, 0, 1)).to(torch.float32) for p in probes]
    )
    source = source_embeddings(module, (batch - mean) / std, head=manifest.output_head)

    cosines = []
    for emb, src in zip(graph_embs, source):
        a = emb.values
        b = np.asarray(src, dtype=np.float64)
        cos = float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))
        cosines.append(cos)
        if cos < min_cosine:
            raise ParityFailure(
                f"probe cosine similarity {cos:.6f} below {min_cosine} "
                f"for {manifest.model_name}"
            )
    return cosines


def export_module(
    module,
    model_name: str,
    output_path,
    head: str = CLASS_TOKEN,
    input_size: tuple[int, int] = (224, 224),
    mean: tuple[float, float, float] = (0.485, 0.456, 0.406),
    std: tuple[float, float, float] = (0.229, 0.224, 0.225),
    run_parity: bool = True,
) -> ExportManifest:
    """Build the graph from a torch module, write <out>.onnx and
    <out>.manifest.json, and verify parity on random probes."""
    output_path = Path(output_path)
    graph = build_vit_graph(module, input_size=input_size, head=head)
    dim = graph.outputs[0].dims[1]
    output_path.parent.mkdir(parents=True, exist_ok=True)
    output_path.write_bytes(write_model(graph))

    manifest = ExportManifest(
        model_name=model_name,
        output_path=str(output_path),
        embedding_dim=int(dim),
        input_size=tuple(input_size),
        mean=tuple(mean),
        std=tuple(std),
        output_head=head,
    )
    manifest_path = output_path.parent / f"{output_path.stem}.manifest.json"
    manifest_path.write_text(manifest.to_json())
    if run_parity:
        parity_check(module, manifest)
    return manifest


def export_registered(
    name: str, output_path, head: str = CLASS_TOKEN, run_parity: bool = True
) -> ExportManifest:
    """Export a registry model by name (downloads weights through torch.hub)."""
    entry: RegistryEntry = lookup(name)
    module = load_pretrained(entry)
    return export_module(
        module,
        model_name=name,
        output_path=output_path,
        head=head,
        input_size=entry.input_size,
        mean=entry.mean,
        std=entry.std,
        run_parity=run_parity,
    )
