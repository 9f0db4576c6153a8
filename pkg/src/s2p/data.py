"""Corpus ingestion and manifest management.

A manifest is a JSONL file, one object per entry:
{"path": ..., "caption": ..., "split": "train"|"val", "checksum": ...}
Captions resolve sidecar `<stem>.txt` first, then a TSV row, then a template.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .edges import EdgeParams, standardize
from .images import InvalidInputError, center_crop_square, load_image, resize_bilinear

__all__ = [
    "ManifestEntry",
    "DatasetManifest",
    "ingest_corpus",
    "prepare_example",
    "split_manifest",
]

_IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp"}


@dataclass
class ManifestEntry:
    path: str
    caption: str
    split: str = "train"
    checksum: str = ""


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry] = field(default_factory=list)
    resolution: int = 64

    def save(self, path) -> None:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8") as f:
            f.write(json.dumps({"resolution": self.resolution}) + "\n")
            for e in self.entries:
                f.write(
                    json.dumps(
                        {"path": e.path, "caption": e.caption, "split": e.split, "checksum": e.checksum}
                    )
                    + "\n"
                )

    @classmethod
    def load(cls, path) -> "DatasetManifest":
        with open(path, encoding="utf-8") as f:
            lines = [line for line in f if line.strip()]
        if not lines:
            raise InvalidInputError(f"empty manifest: {path}")
        head = json.loads(lines[0])
        entries = [ManifestEntry(**json.loads(line)) for line in lines[1:]]
        return cls(entries=entries, resolution=head.get("resolution", 64))


def _checksum(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()[:16]


def _load_tsv_captions(tsv_path) -> dict[str, str]:
    table: dict[str, str] = {}
    with open(tsv_path, encoding="utf-8") as f:
        for line in f:
            line = line.rstrip("\n")
            if not line:
                continue
            stem, _, caption = line.partition("\t")
            table[stem] = caption
    return table


def ingest_corpus(
    photos_dir,
    captions_source: str | None = None,
    resolution: int = 64,
    template: str | None = None,
) -> DatasetManifest:
    """Build a manifest from a photo directory.

    ``captions_source`` may be a TSV path (stem<TAB>caption); sidecar
    `<stem>.txt` files win over TSV rows, which win over the template.
    The template may reference `{dirname}` and `{stem}`.
    """
    root = Path(photos_dir)
    if not root.is_dir():
        raise InvalidInputError(f"not a directory: {root}")
    tsv = _load_tsv_captions(captions_source) if captions_source else {}
    entries: list[ManifestEntry] = []
    for p in sorted(root.iterdir()):
        if not p.is_file() or p.suffix.lower() not in _IMAGE_SUFFIXES:
            continue
        try:
            load_image(p)  # validate decodability
        except Exception:
            continue
        sidecar = p.with_suffix(".txt")
        if sidecar.is_file():
            caption = sidecar.read_text(encoding="utf-8").strip()
        elif p.stem in tsv:
            caption = tsv[p.stem]
        elif template is not None:
            caption = template.format(dirname=root.name, stem=p.stem)
        else:
            caption = ""
        entries.append(ManifestEntry(path=str(p), caption=caption, checksum=_checksum(p)))
    if not entries:
        raise InvalidInputError(f"no readable images in {root}")
    return DatasetManifest(entries=entries, resolution=resolution)


def prepare_example(
    entry: ManifestEntry,
    resolution: int,
    edge_params: EdgeParams = EdgeParams(),
) -> tuple[np.ndarray, np.ndarray, str]:
    """Entry -> (photo, edge, caption) at the training resolution.

    Center-crop to square, bilinear resize, then standardize the resized
    photo into the edge domain. Deterministic: no augmentation.
    """
    try:
        image = load_image(entry.path)
    except Exception as exc:
        raise InvalidInputError(f"cannot decode {entry.path}: {exc}") from exc
    photo = resize_bilinear(center_crop_square(image), resolution)
    edge = standardize(photo, edge_params)
    return photo, edge, entry.caption


def split_manifest(manifest: DatasetManifest, val_fraction: float, seed: int) -> DatasetManifest:
    """Assign train/val splits by a seeded shuffle; floor(n * frac) go to val."""
    if not 0.0 <= val_fraction < 1.0:
        raise InvalidInputError("val_fraction must lie in [0, 1)")
    n = len(manifest.entries)
    order = torch.randperm(n, generator=torch.Generator().manual_seed(seed)).tolist()
    n_val = int(n * val_fraction)
    val_idx = set(order[:n_val])
    entries = [
        ManifestEntry(e.path, e.caption, "val" if i in val_idx else "train", e.checksum)
        for i, e in enumerate(manifest.entries)
    ]
    return DatasetManifest(entries=entries, resolution=manifest.resolution)
