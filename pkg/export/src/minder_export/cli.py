"""Command-line export tool.

`minder-export run --model dinov2_vitb14 --out models/dinov2_b.onnx` fetches
the checkpoint, writes the graph plus its manifest, and verifies parity.
A local pickled module can be exported with --checkpoint instead of --model.
"""

from __future__ import annotations

import sys
from pathlib import Path

import click

from .errors import ParityFailure, RetrievalError, UnknownModel
from .export import export_module, export_registered
from .registry import REGISTRY
from .vit import CLASS_TOKEN, HEADS

EXIT_UNKNOWN_MODEL = 2
EXIT_RETRIEVAL = 3
EXIT_PARITY = 4


@click.group()
def main():
    """Export pretrained vision encoders for the minder toolkit."""


@main.command("list")
def list_models():
    """Show the registry of exportable checkpoints."""
    for name, entry in sorted(REGISTRY.items()):
        click.echo(f"{name}: dim {entry.embedding_dim}, input {entry.input_size}")


@main.command()
@click.option("--model", default=None, help="Registry name (see `list`).")
@click.option("--checkpoint", type=click.Path(exists=True), default=None,
              help="Pickled torch module to export instead of a registry model.")
@click.option("--head", type=click.Choice(list(HEADS)), default=CLASS_TOKEN,
              show_default=True)
@click.option("--out", "out_path", type=click.Path(), required=True)
@click.option("--input-size", type=int, default=224, show_default=True)
@click.option("--skip-parity", is_flag=True, help="Write the graph without verifying.")
def run(model, checkpoint, head, out_path, input_size, skip_parity):
    """Export one encoder to <out>.onnx plus <out>.manifest.json."""
    if (model is None) == (checkpoint is None):
        click.echo("error: pass exactly one of --model or --checkpoint", err=True)
        sys.exit(EXIT_UNKNOWN_MODEL)
    try:
        if model is not None:
            manifest = export_registered(
                model, out_path, head=head, run_parity=not skip_parity
            )
        else:
            import torch

            module = torch.load(checkpoint, map_location="cpu", weights_only=False)
            manifest = export_module(
                module,
                model_name=Path(checkpoint).stem,
                output_path=out_path,
                head=head,
                input_size=(input_size, input_size),
                run_parity=not skip_parity,
            )
    except UnknownModel as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_UNKNOWN_MODEL)
    except RetrievalError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_RETRIEVAL)
    except ParityFailure as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_PARITY)
    click.echo(
        f"exported {manifest.model_name} (dim {manifest.embedding_dim}, "
        f"head {manifest.output_head}) -> {manifest.output_path}"
    )


if __name__ == "__main__":
    main()
