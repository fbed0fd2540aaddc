"""Known exportable checkpoints and their preprocessing metadata."""

from __future__ import annotations

from dataclasses import dataclass

from .errors import RetrievalError, UnknownModel

IMAGENET_MEAN = (0.485, 0.456, 0.406)
IMAGENET_STD = (0.229, 0.224, 0.225)


@dataclass(frozen=True)
class RegistryEntry:
    name: str
    hub_repo: str
    hub_name: str
    embedding_dim: int
    input_size: tuple[int, int] = (224, 224)
    mean: tuple[float, float, float] = IMAGENET_MEAN
    std: tuple[float, float, float] = IMAGENET_STD


REGISTRY = {
    e.name: e
    for e in (
        RegistryEntry("dinov2_vits14", "facebookresearch/dinov2", "dinov2_vits14", 384),
        RegistryEntry("dinov2_vitb14", "facebookresearch/dinov2", "dinov2_vitb14", 768),
        RegistryEntry("dinov2_vitl14", "facebookresearch/dinov2", "dinov2_vitl14", 1024),
    )
}


def lookup(name: str) -> RegistryEntry:
    try:
        return REGISTRY[name]
    except KeyError:
        known = ", ".join(sorted(REGISTRY))
        raise UnknownModel(f"unknown model {name!r}; registry holds: {known}") from None


def load_pretrained(entry: RegistryEntry):
    """Fetch the pretrained module through torch.hub; needs network access or
    a warm hub cache."""
    import torch

    try:
        return torch.hub.load(entry.hub_repo, entry.hub_name, trust_repo=True)
    except Exception as exc:
        raise RetrievalError(
            f"could not retrieve {entry.name} via torch.hub ({exc}); "
            "download requires network access or a populated TORCH_HOME cache"
        ) from exc
