"""Umbrella CLI wiring every subsystem.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import click
import torch

from . import data as data_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .diffusion import DiffusionConfig, model_from_checkpoint, train_diffusion
from .edges import EdgeParams, batch_standardize, load_external_edges
from .evaluate import (
    FallbackPerceptualBackend,
    ExternalScorerBackend,
    evaluate_reconstruction,
    style_sweep,
)
from .images import load_image, save_image
from .sampler import SamplerConfig, sample
from .text import Vocabulary
from .vae import AutoencoderConfig, load_codec, train_autoencoder


@click.group()
def cli():
    """Sketch-to-photo latent diffusion toolkit."""


@cli.command("standardize")
@click.option("--in", "input_dir", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", "output_dir", required=True, type=click.Path(file_okay=False))
@click.option("--sigma", default=1.0, show_default=True)
@click.option("--low", default=0.1, show_default=True)
@click.option("--high", default=0.2, show_default=True)
@click.option("--binarize", is_flag=True)
def standardize_cmd(input_dir, output_dir, sigma, low, high, binarize):
    """Convert a directory of images to edge maps."""
    params = EdgeParams(blur_sigma=sigma, low_threshold=low, high_threshold=high, binarize=binarize)
    report = batch_standardize(input_dir, output_dir, params)
    click.echo(json.dumps(report))
    if report["failures"]:
        click.echo(f"{len(report['failures'])} file(s) failed", err=True)


@cli.command("ingest")
@click.option("--photos", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--captions", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--template", default=None)
@click.option("--resolution", default=64, show_default=True)
@click.option("--val-fraction", default=0.0, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def ingest_cmd(photos, captions, template, resolution, val_fraction, seed, out_path):
    """Build a dataset manifest from a photo directory."""
    manifest = data_mod.ingest_corpus(photos, captions, resolution, template)
    if val_fraction > 0:
        manifest = data_mod.split_manifest(manifest, val_fraction, seed)
    manifest.save(out_path)
    click.echo(f"wrote {len(manifest.entries)} entries to {out_path}")


def _parse_kv_config(path, cls):
    text = Path(path).read_text(encoding="utf-8")
    if cls is DiffusionConfig:
        return DiffusionConfig.from_kv_text(text)
    kwargs = {}
    casts = {f.name: f.type for f in fields(cls)}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in casts:
            raise click.ClickException(f"unknown config key {key!r}")
        kwargs[key] = float(value) if casts[key] == "float" else int(value)
    return cls(**kwargs)


def _load_training_set(manifest_path):
    manifest = data_mod.DatasetManifest.load(manifest_path)
    train = [e for e in manifest.entries if e.split == "train"]
    return manifest, [
        (photo, caption)
        for photo, _, caption in (
            data_mod.prepare_example(e, manifest.resolution) for e in train
        )
    ]


@cli.command("train-vae")
@click.option("--data", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def train_vae_cmd(manifest_path, config_path, out_path):
    """Train the latent autoencoder on a manifest's train split."""
    config = _parse_kv_config(config_path, AutoencoderConfig) if config_path else AutoencoderConfig()
    _, pairs = _load_training_set(manifest_path)
    ckpt, losses = train_autoencoder([p for p, _ in pairs], config)
    save_checkpoint(ckpt, out_path)
    click.echo(f"final loss {losses[-1]:.6f}; wrote {out_path}")


@cli.command("train-diffusion")
@click.option("--data", "manifest_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--vae", "vae_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--config", "config_path", default=None, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def train_diffusion_cmd(manifest_path, vae_path, config_path, out_path):
    """Train the sketch-conditioned denoiser against a frozen VAE."""
    config = _parse_kv_config(config_path, DiffusionConfig) if config_path else DiffusionConfig()
    codec = load_codec(vae_path)
    _, pairs = _load_training_set(manifest_path)
    ckpt, losses, model = train_diffusion(pairs, config, codec)
    save_checkpoint(ckpt, out_path)
    model.vocab.save(str(out_path) + ".vocab.txt")
    log_path = str(out_path) + ".loss.csv"
    with open(log_path, "w", encoding="utf-8") as f:
        f.write("step,loss\n")
        f.writelines(f"{i},{v}\n" for i, v in enumerate(losses))
    click.echo(f"final loss {losses[-1]:.6f}; wrote {out_path} and {log_path}")


def _load_model(ckpt_path, vae_path):
    codec = load_codec(vae_path)
    return model_from_checkpoint(load_checkpoint(ckpt_path), codec)


@cli.command("sample")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--vae", required=True, type=click.Path(dir_okay=False))
@click.option("--sketch", required=True, type=click.Path(dir_okay=False))
@click.option("--prompt", default="")
@click.option("--scale", default=7.5, show_default=True)
@click.option("--steps", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--method", default="ddim", type=click.Choice(["ddim", "ddpm"]), show_default=True)
@click.option("--eta", default=0.0, show_default=True)
@click.option("--aug-level", default=0, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def sample_cmd(ckpt, vae, sketch, prompt, scale, steps, seed, method, eta, aug_level, out_path):
    """Generate an image from a sketch PNG and a prompt."""
    model = _load_model(ckpt, vae)
    res = model.config.resolution
    edge = load_external_edges(sketch, (res, res))
    cfg = SamplerConfig(
        steps=steps, guidance_scale=scale, method=method, eta=eta, seed=seed, aug_level=aug_level
    )
    image = sample(model, edge, prompt, cfg)
    save_image(image, out_path)
    click.echo(f"wrote {out_path}")


@cli.command("eval")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--vae", required=True, type=click.Path(dir_okay=False))
@click.option("--manifest", required=True, type=click.Path(dir_okay=False))
@click.option("--backend", default="fallback", type=click.Choice(["fallback", "external"]), show_default=True)
@click.option("--scorer-cmd", default=None, help="external scorer command (external backend)")
@click.option("--scale", default=7.5, show_default=True)
@click.option("--steps", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--report-resolution", default=256, show_default=True)
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
def eval_cmd(ckpt, vae, manifest, backend, scorer_cmd, scale, steps, seed, report_resolution, out_path):
    """Run the reconstruction evaluation protocol."""
    model = _load_model(ckpt, vae)
    man = data_mod.DatasetManifest.load(manifest)
    if backend == "external":
        if not scorer_cmd:
            raise click.ClickException("--scorer-cmd is required for the external backend")
        be = ExternalScorerBackend(scorer_cmd.split())
    else:
        be = FallbackPerceptualBackend(model.codec)
    cfg = SamplerConfig(steps=steps, guidance_scale=scale, seed=seed)
    report = evaluate_reconstruction(model, man, cfg, be, report_resolution=report_resolution)
    Path(out_path).write_text(report.to_json(), encoding="utf-8")
    click.echo(f"mean distance {report.mean_distance:.4f} over {report.n} items")


@cli.command("sweep")
@click.option("--ckpt", required=True, type=click.Path(dir_okay=False))
@click.option("--vae", required=True, type=click.Path(dir_okay=False))
@click.option("--sketch", required=True, type=click.Path(dir_okay=False))
@click.option("--caption", default="")
@click.option("--scale", default=7.5, show_default=True)
@click.option("--steps", default=50, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
def sweep_cmd(ckpt, vae, sketch, caption, scale, steps, seed, out_dir):
    """Sample the default style-prefix sweep with a shared seed."""
    model = _load_model(ckpt, vae)
    res = model.config.resolution
    edge = load_external_edges(sketch, (res, res))
    cfg = SamplerConfig(steps=steps, guidance_scale=scale, seed=seed)
    results = style_sweep(model, edge, caption, cfg)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, (prefix, image) in enumerate(results):
        slug = prefix.replace(" ", "_")
        save_image(image, out / f"{i:02d}_{slug}.png")
    click.echo(f"wrote {len(results)} images to {out}")


@cli.command("serve")
@click.option("--ckpt", default=None, type=click.Path(dir_okay=False))
@click.option("--vae", default=None, type=click.Path(dir_okay=False))
@click.option("--bind", default=None, help="host:port")
@click.option("--workers", default=2, show_default=True)
def serve_cmd(ckpt, vae, bind, workers):
    """Run the HTTP generation service (env: S2P_CKPT, S2P_VAE, S2P_BIND)."""
    import uvicorn

    from .service import create_app

    ckpt = ckpt or os.environ.get("S2P_CKPT")
    vae = vae or os.environ.get("S2P_VAE")
    bind = bind or os.environ.get("S2P_BIND", "127.0.0.1:8000")
    if not ckpt or not vae:
        raise click.UsageError("checkpoint paths required (--ckpt/--vae or S2P_CKPT/S2P_VAE)")
    model = _load_model(ckpt, vae)
    host, _, port = bind.partition(":")
    app = create_app(model, worker_count=workers)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


def main(argv: list[str] | None = None) -> int:
    """Dispatch with the documented exit codes."""
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        cli.main(args=args, standalone_mode=False)
        return 0
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        return 1
    except click.exceptions.UsageError as exc:
        exc.show(file=sys.stderr)
        return 1
    except click.exceptions.ClickException as exc:
        exc.show(file=sys.stderr)
        return 2
    except SystemExit as exc:  # raised by --help
        return int(exc.code or 0)
    except Exception as exc:
        click.echo(f"error: {exc}", err=True)
        return 2


if __name__ == "__main__":
    sys.exit(main())
