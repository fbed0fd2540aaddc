"""Command-line entry point.

Subcommands: detect, calibrate, evaluate, sweep, spectrum, analyze. Machine-
readable rows go to stdout or files; progress and diagnostics go to stderr.
Exit codes: 2 config error, 3 model load failure, 4 missing threshold,
5 too few calibration samples.
"""

from __future__ import annotations

import functools
import json
import sys
from pathlib import Path

import click

from . import evaluate as ev
from . import imagio
from .calibrate import Threshold, calibrate_threshold, decide
from .config import DEFAULT_TARGET_FPR, RunConfig, load_config
from .encoder import EncoderSession
from .errors import (
    ConfigError,
    EmptyCorpus,
    EmptySplit,
    MinderError,
    MissingThreshold,
    ModelLoadError,
    TooFewSamples,
)
from .evaluate import PipelineConfig, run_evaluation, score_corpus, score_image
from .perturb import (
    CONTRASTIVE_BLUR,
    GAUSSIAN_BLUR,
    SHARPEN,
    PerturbationSpec,
)
from .scoring import CombinerSpec, fit_contrastive_decomposition
from .spectra import mean_spectrum

EXIT_CONFIG = 2
EXIT_MODEL = 3
EXIT_THRESHOLD = 4
EXIT_SAMPLES = 5


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def handle_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ModelLoadError as exc:
            _fail(EXIT_MODEL, str(exc))
        except MissingThreshold as exc:
            _fail(EXIT_THRESHOLD, str(exc))
        except TooFewSamples as exc:
            _fail(EXIT_SAMPLES, str(exc))
        except (ConfigError, EmptyCorpus, EmptySplit, ValueError) as exc:
            _fail(EXIT_CONFIG, str(exc))
        except MinderError as exc:
            _fail(1, str(exc))

    return wrapper


def _load(config, overrides=None) -> RunConfig:
    return load_config(config, overrides=overrides)


config_option = click.option(
    "--config", type=click.Path(), default=None, help="JSON run config file."
)
jobs_option = click.option(
    "--jobs", type=int, default=1, show_default=True, help="Worker threads."
)


@click.group()
def main():
    """Training-free AI-generated-image detector."""


@main.command()
@config_option
@click.option("--threshold", "threshold_path", type=click.Path(), default=None,
              help="Calibrated threshold JSON; enables the decision column.")
@click.argument("images", nargs=-1, required=True, type=click.Path())
@handle_errors
def detect(config, threshold_path, images):
    """Score images; with --threshold also print real/fake decisions."""
    cfg = _load(config)
    th = None
    if threshold_path is not None:
        p = Path(threshold_path)
        if not p.is_file():
            raise MissingThreshold(f"threshold file not found: {p}")
        th = Threshold.from_json(p.read_text())
    session = EncoderSession(cfg.pipeline.encoder)
    size = tuple(cfg.pipeline.encoder.input_size)
    for path in images:
        img = imagio.load_image(path, target_size=size)
        record = score_image(img, str(path), cfg.pipeline, session)
        if th is None:
            click.echo(f"{path},{record.combined!r}")
        else:
            click.echo(f"{path},{record.combined!r},{decide(record.combined, th)}")


@main.command()
@config_option
@jobs_option
@click.option("--target-fpr", type=float, default=None,
              help=f"Target false-positive rate (default {DEFAULT_TARGET_FPR}).")
@click.option("--out", "out_path", type=click.Path(), default=None,
              help="Threshold JSON destination (default <output_dir>/threshold.json).")
@click.argument("real_corpus", type=click.Path(exists=True, file_okay=False))
@handle_errors
def calibrate(config, jobs, target_fpr, out_path, real_corpus):
    """Fit the decision threshold on a directory of real images."""
    cfg = _load(config, overrides={"target_fpr": target_fpr})
    root = Path(real_corpus)
    paths = sorted(
        (p for p in root.rglob("*") if p.is_file()), key=lambda p: p.as_posix()
    )
    entries = tuple(
        imagio.ManifestEntry(p.relative_to(root).as_posix(), imagio.REAL)
        for p in paths
        if imagio._probe_image(p)
    )
    if not entries:
        raise EmptyCorpus(f"no decodable images under {root}")
    manifest = imagio.CorpusManifest(root=root, entries=entries)
    records, n_skipped = score_corpus(manifest, cfg.pipeline, jobs=jobs)
    th = calibrate_threshold(
        [r.combined for r in records], cfg.target_fpr, combiner=cfg.pipeline.combiner
    ).with_fingerprint(cfg.pipeline.fingerprint())
    dest = Path(out_path) if out_path else Path(cfg.output_dir) / "threshold.json"
    dest.parent.mkdir(parents=True, exist_ok=True)
    dest.write_text(th.to_json())
    click.echo(
        f"calibrated on {th.n_calibration} images (skipped {n_skipped}); "
        f"achieved FPR {th.achieved_fpr:.4f} at epsilon {th.epsilon!r} -> {dest}",
        err=True,
    )
    click.echo(f"{th.epsilon!r},{th.achieved_fpr!r}")


def _eval_setup(config, corpus) -> tuple[RunConfig, "imagio.CorpusManifest"]:
    cfg = _load(config, overrides={"corpus": corpus})
    if not cfg.corpus:
        raise ConfigError("no corpus directory given (flag or config key 'corpus')")
    manifest = imagio.scan_corpus(cfg.corpus)
    return cfg, manifest


@main.command()
@config_option
@jobs_option
@click.option("--threshold", "threshold_path", type=click.Path(), default=None)
@click.option("--out-dir", type=click.Path(), default=None,
              help="Report directory (default from config output_dir).")
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@handle_errors
def evaluate(config, jobs, threshold_path, out_dir, corpus):
    """Score a labeled corpus and write report.json, scores.csv, roc.csv."""
    cfg, manifest = _eval_setup(config, corpus)
    th = None
    if threshold_path is not None:
        p = Path(threshold_path)
        if not p.is_file():
            raise MissingThreshold(f"threshold file not found: {p}")
        th = Threshold.from_json(p.read_text())
    report, records = run_evaluation(
        manifest, cfg.pipeline, corpus_tag=Path(corpus).name, jobs=jobs, threshold=th
    )
    out = Path(out_dir) if out_dir else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.json").write_text(report.to_json())
    (out / "scores.csv").write_text(ev.scores_csv(records, cfg.pipeline))
    real = [r.combined for r in records if r.label == imagio.REAL]
    fake = [r.combined for r in records if r.label == imagio.FAKE]
    (out / "roc.csv").write_text(ev.roc_csv(ev.roc_points(real, fake)))
    click.echo(f"auroc {report.auroc:.4f} over {report.n_real}+{report.n_fake} images "
               f"-> {out}", err=True)
    click.echo(f"{report.auroc!r}")


@main.command()
@config_option
@jobs_option
@click.option("--kind", type=click.Choice(["sigma", "jpeg"]), required=True)
@click.option("--grid", default=None,
              help="Comma-separated sigma values (sigma sweeps).")
@click.option("--qualities", default=None,
              help="Comma-separated JPEG qualities (jpeg sweeps).")
@click.option("--perturbation", default=GAUSSIAN_BLUR, show_default=True,
              help="Perturbation kind swept over the sigma grid.")
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@handle_errors
def sweep(config, jobs, kind, grid, qualities, perturbation, out_path, corpus):
    """Parameter or JPEG-quality sweep; emits one CSV row per grid point."""
    cfg, manifest = _eval_setup(config, corpus)
    tag = Path(corpus).name
    if kind == "sigma":
        values = [float(v) for v in (grid or "0.45,0.5,0.55,0.6,0.65").split(",")]
        rows = ev.parameter_sweep(
            manifest, values, perturbation, cfg.pipeline, corpus_tag=tag, jobs=jobs
        )
        csv_text = ev.sweep_csv(rows, param_name="sigma")
    else:
        values = [int(v) for v in (qualities or "90,70,50,30").split(",")]
        reports = ev.jpeg_sweep(manifest, values, cfg.pipeline, corpus_tag=tag, jobs=jobs)
        csv_text = ev.sweep_csv(list(zip(values, reports)), param_name="quality")
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(csv_text)
        click.echo(f"sweep -> {out_path}", err=True)
    else:
        click.echo(csv_text, nl=False)


@main.command()
@config_option
@click.option("--out-dir", type=click.Path(), default=None)
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@handle_errors
def spectrum(config, out_dir, corpus):
    """Dataset-mean log spectra; one map per label split when present."""
    cfg = _load(config)
    root = Path(corpus)
    out = Path(out_dir) if out_dir else Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    size = tuple(cfg.pipeline.encoder.input_size)

    def images_under(directory: Path):
        for p in sorted(directory.rglob("*"), key=lambda p: p.as_posix()):
            if p.is_file() and imagio._probe_image(p):
                yield imagio.load_image(p, target_size=size)

    splits = [d for d in (root / imagio.REAL, root / imagio.FAKE) if d.is_dir()]
    targets = splits or [root]
    for directory in targets:
        name = directory.name if splits else "spectrum"
        smap = mean_spectrum(images_under(directory))
        written = smap.save(out / name)
        click.echo(f"{name}: {smap.n_images} images -> {written[0]}", err=True)


@main.command()
@config_option
@jobs_option
@click.option("--sigma-blur", type=float, default=0.55, show_default=True)
@click.option("--out", "out_path", type=click.Path(), default=None)
@click.argument("corpus", type=click.Path(exists=True, file_okay=False))
@handle_errors
def analyze(config, jobs, sigma_blur, out_path, corpus):
    """Fit pair distance ~ alpha*blur + beta*sharpen + gamma per label group."""
    cfg = _load(config)
    manifest = imagio.scan_corpus(corpus)
    seed = cfg.seed
    channels = (
        PerturbationSpec(kind=CONTRASTIVE_BLUR, sigma_blur=sigma_blur, seed=seed),
        PerturbationSpec(kind=GAUSSIAN_BLUR, sigma_blur=sigma_blur, seed=seed),
        PerturbationSpec(kind=SHARPEN, sigma_blur=sigma_blur, seed=seed),
    )
    pipeline = PipelineConfig(
        encoder=cfg.pipeline.encoder,
        perturbations=channels,
        combiner=CombinerSpec(mode="single", channels=(channels[0].name,)),
    )
    records, _ = score_corpus(manifest, pipeline, jobs=jobs)
    result = {}
    for label in (imagio.REAL, imagio.FAKE):
        triples = [
            (
                r.channel_scores[channels[0].name],
                r.channel_scores[channels[1].name],
                r.channel_scores[channels[2].name],
            )
            for r in records
            if r.label == label
        ]
        fit = fit_contrastive_decomposition(triples)
        result[label] = {
            "alpha": fit.alpha,
            "beta": fit.beta,
            "gamma": fit.gamma,
            "residual_rms": fit.residual_rms,
            "n": fit.n,
        }
    payload = json.dumps(
        {"sigma_blur": sigma_blur, "fits": result,
         "config_fingerprint": pipeline.fingerprint()},
        sort_keys=True, indent=2,
    ) + "\n"
    if out_path:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        Path(out_path).write_text(payload)
        click.echo(f"analyze -> {out_path}", err=True)
    else:
        click.echo(payload, nl=False)


if __name__ == "__main__":
    main()
