"""Reconstruction evaluation and the style-prefix sweep.

The reconstruction protocol: derive an edge map from each photo, sample with
the photo's caption as the prompt, resize both to the report resolution and
score with a perceptual distance. The hermetic default metric compares
normalized feature maps from the trained autoencoder's encoder layers; an
external adapter (TSV of image pairs in, CSV of distances out) lets a real
learned perceptual metric take its place.

Full-scale reference scores recorded for provenance (not desk-reproducible):
one-channel 0.493 / 0.496, three-channel 0.414 / 0.416, prior baseline
0.691 / 0.447 on the two evaluation datasets at 256x256.
"""

from __future__ import annotations

import csv
import json
import subprocess
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn

from .data import DatasetManifest, prepare_example
from .diffusion import SketchDiffusion
from .images import InvalidInputError, resize_bilinear, save_image, validate_image
from .sampler import SamplerConfig, sample
from .vae import LatentCodec

__all__ = [
    "STYLE_PREFIXES",
    "FallbackPerceptualBackend",
    "ExternalScorerBackend",
    "EvalReport",
    "perceptual_distance",
    "evaluate_reconstruction",
    "style_sweep",
]

# The nine style prefixes of the qualitative sweep, plus the default
# photographic prefix used at inference.
STYLE_PREFIXES = [
    "an anime scene of",
    "a watercolor painting of",
    "an ukiyo-e art of",
    "a black and white photograph of",
    "a fresco painting of",
    "a graffiti of",
    "an oil painting of",
    "a pop art of",
    "an abstract art of",
]
DEFAULT_PREFIX = "a color photograph of"


class FallbackPerceptualBackend:
    """Perceptual distance from the trained autoencoder's encoder features.

    For each activation map after every encoder stage, channel vectors are
    unit-normalized per spatial location and compared by mean squared
    difference; the layer means are averaged. Symmetric, non-negative, and
    zero exactly on identical inputs.
    """

    kind = "encoder-feature-fallback"

    def __init__(self, codec: LatentCodec):
        self.codec = codec

    def _features(self, image: np.ndarray) -> list[torch.Tensor]:
        arr = validate_image(image)
        x = torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)
        feats = []
        with torch.no_grad():
            h = x
            for layer in self.codec.model.encoder:
                h = layer(h)
                if isinstance(layer, (nn.Conv2d,)):
                    feats.append(h)
        return feats

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        if a.shape != b.shape:
            raise InvalidInputError(f"shape mismatch: {a.shape} vs {b.shape}")
        total = 0.0
        fa, fb = self._features(a), self._features(b)
        for xa, xb in zip(fa, fb):
            na = xa / (xa.norm(dim=1, keepdim=True) + 1e-10)
            nb = xb / (xb.norm(dim=1, keepdim=True) + 1e-10)
            total += float(torch.mean((na - nb) ** 2))
        return total / len(fa)


class ExternalScorerBackend:
    """Adapter for an external perceptual scorer process.

    Contract: the command receives an input TSV path (columns: path_a,
    path_b) and an output CSV path; it writes one distance per line in input
    order.
    """

    kind = "external-lpips-adapter"

    def __init__(self, command: list[str]):
        self.command = command

    def distance(self, a: np.ndarray, b: np.ndarray) -> float:
        return self.distance_batch([(a, b)])[0]

    def distance_batch(self, pairs: list[tuple[np.ndarray, np.ndarray]]) -> list[float]:
        with tempfile.TemporaryDirectory() as tmp:
            tmp_path = Path(tmp)
            rows = []
            for i, (a, b) in enumerate(pairs):
                pa, pb = tmp_path / f"a_{i}.png", tmp_path / f"b_{i}.png"
                save_image(a, pa)
                save_image(b, pb)
                rows.append((str(pa), str(pb)))
            in_tsv = tmp_path / "pairs.tsv"
            out_csv = tmp_path / "scores.csv"
            in_tsv.write_text("".join(f"{a}\t{b}\n" for a, b in rows), encoding="utf-8")
            result = subprocess.run(
                [*self.command, str(in_tsv), str(out_csv)], capture_output=True, text=True
            )
            if result.returncode != 0 or not out_csv.is_file():
                raise RuntimeError(f"external scorer failed: {result.stderr.strip()}")
            with open(out_csv, newline="", encoding="utf-8") as f:
                scores = [float(row[0]) for row in csv.reader(f) if row]
        if len(scores) != len(pairs):
            raise RuntimeError("external scorer returned wrong number of scores")
        return scores


def perceptual_distance(a: np.ndarray, b: np.ndarray, backend) -> float:
    a = validate_image(a)
    b = validate_image(b)
    if a.shape[2] != 3 or b.shape[2] != 3:
        raise InvalidInputError("perceptual distance expects 3-channel images")
    d = backend.distance(a, b)
    if d < 0:
        raise RuntimeError("backend returned a negative distance")
    return d


@dataclass
class EvalReport:
    dataset: str
    n: int
    mean_distance: float
    per_item: list[dict]
    config: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(
            {
                "dataset": self.dataset,
                "n": self.n,
                "mean_distance": self.mean_distance,
                "per_item": self.per_item,
                "config": self.config,
            },
            indent=2,
        )


def evaluate_reconstruction(
    model: SketchDiffusion,
    manifest: DatasetManifest,
    sampler_cfg: SamplerConfig,
    backend,
    report_resolution: int = 256,
    dataset_name: str = "dataset",
    sample_fn=None,
) -> EvalReport:
    """Score sampled reconstructions against their source photos.

    ``sample_fn(model, edge, caption, cfg) -> image`` may be injected; the
    default is the CFG sampler.
    """
    if not manifest.entries:
        raise InvalidInputError("empty manifest")
    if sample_fn is None:
        sample_fn = lambda m, edge, caption, cfg: sample(m, edge, caption, cfg)
    per_item = []
    for entry in manifest.entries:
        photo, edge, caption = prepare_example(entry, manifest.resolution)
        generated = sample_fn(model, edge, caption, sampler_cfg)
        ref = resize_bilinear(photo, report_resolution)
        gen = resize_bilinear(generated, report_resolution)
        d = perceptual_distance(ref, gen, backend)
        per_item.append({"path": entry.path, "distance": d})
    mean = float(np.mean([item["distance"] for item in per_item]))
    return EvalReport(
        dataset=dataset_name,
        n=len(per_item),
        mean_distance=mean,
        per_item=per_item,
        config={
            "report_resolution": report_resolution,
            "sampler": sampler_cfg.__dict__,
            "backend": backend.kind,
        },
    )


def style_sweep(
    model: SketchDiffusion,
    sketch: np.ndarray,
    base_caption: str,
    sampler_cfg: SamplerConfig,
    prefixes: list[str] | None = None,
) -> list[tuple[str, np.ndarray]]:
    """One sample per style prefix, all sharing the same seed.

    Prompt = prefix + " " + base caption; only the text varies across the
    sweep, so differences are attributable to the prompt.
    """
    if prefixes is None:
        prefixes = list(STYLE_PREFIXES)
    if not prefixes:
        raise InvalidInputError("empty prefix list")
    out = []
    for prefix in prefixes:
        prompt = f"{prefix} {base_caption}".strip()
        out.append((prefix, sample(model, sketch, prompt, sampler_cfg)))
    return out
