"""Interchange-file readers and writers.

Array files are NPY format version 1.0, little-endian float32, C-order:
features/gradients as (D, H, W) or (L, D) pre-extraction, maps as (H, W).
Metadata is one UTF-8 JSON document per sample; masks are 8-bit grayscale
PNGs with nonzero pixels marking the object.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .core import (
    ActivationMap,
    CamRefineError,
    GroundTruthMaskSet,
    InvalidMap,
    SampleMetadata,
    StepRecord,
    TokenInfo,
)


class InterchangeError(CamRefineError):
    """Raised for unreadable or schema-violating interchange files."""


def write_array(path, arr: np.ndarray) -> None:
    """Write an array as NPY v1.0, little-endian float32, C-order."""
    out = np.ascontiguousarray(np.asarray(arr), dtype="<f4")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fp:
        np.lib.format.write_array(fp, out, version=(1, 0))


def read_array(path, ndim: Optional[int] = None) -> np.ndarray:
    """Read an NPY file and promote it to float64 for internal math."""
    try:
        arr = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as exc:
        raise InterchangeError(f"cannot read array file {path}: {exc}") from exc
    if ndim is not None and arr.ndim != ndim:
        raise InterchangeError(f"{path}: expected {ndim}-D array, got shape {arr.shape}")
    return np.asarray(arr, dtype=np.float64)


def write_map(path, m: ActivationMap) -> None:
    write_array(path, m.values)


def read_map(path, normalized: bool = False) -> ActivationMap:
    return ActivationMap(read_array(path, ndim=2), normalized=normalized)


def metadata_to_dict(meta: SampleMetadata, mask_manifest=()) -> dict:
    return {
        "sample_id": meta.sample_id,
        "n_base": meta.n_base,
        "grid": [meta.grid_h, meta.grid_w],
        "hidden_dim": meta.hidden_dim,
        "steps": [
            {"t": s.t, "seq_len": s.seq_len, "img_end": s.img_end} for s in meta.steps
        ],
        "tokens": [
            {
                "index": t.index,
                "text": t.text,
                "pos_tag": t.pos_tag,
                "is_answer": t.is_answer,
                "repeat_count": t.repeat_count,
                "per_token_map": t.per_token_map,
            }
            for t in meta.tokens
        ],
        "response_text": meta.response_text,
        "variant_label": meta.variant_label,
        "mask_manifest": [{"class": c, "path": p} for c, p in mask_manifest],
    }


def metadata_from_dict(doc: dict) -> tuple[SampleMetadata, list[tuple[str, str]]]:
    try:
        grid = doc["grid"]
        steps = tuple(
            StepRecord(t=int(s["t"]), seq_len=int(s["seq_len"]), img_end=s.get("img_end"))
            for s in doc.get("steps", [])
        )
        tokens = tuple(
            TokenInfo(
                index=int(t["index"]),
                text=str(t["text"]),
                pos_tag=str(t.get("pos_tag", "")),
                is_answer=bool(t.get("is_answer", False)),
                repeat_count=int(t.get("repeat_count", 1)),
                per_token_map=t.get("per_token_map"),
            )
            for t in doc.get("tokens", [])
        )
        meta = SampleMetadata(
            sample_id=str(doc["sample_id"]),
            n_base=int(doc["n_base"]),
            grid_h=int(grid[0]),
            grid_w=int(grid[1]),
            hidden_dim=int(doc.get("hidden_dim", 0)),
            steps=steps,
            tokens=tokens,
            response_text=str(doc.get("response_text", "")),
            variant_label=doc.get("variant_label"),
        )
    except (KeyError, TypeError, ValueError, InvalidMap) as exc:
        raise InterchangeError(f"malformed sample metadata: {exc}") from exc
    manifest = [(str(m["class"]), str(m["path"])) for m in doc.get("mask_manifest", [])]
    return meta, manifest


def write_metadata(path, meta: SampleMetadata, mask_manifest=()) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    doc = metadata_to_dict(meta, mask_manifest)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def read_metadata(path) -> tuple[SampleMetadata, list[tuple[str, str]]]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InterchangeError(f"cannot read metadata {path}: {exc}") from exc
    return metadata_from_dict(doc)


def write_mask(path, mask: np.ndarray) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    img = Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), "L")
    img.save(path, format="PNG")


def read_mask(path) -> np.ndarray:
    try:
        img = Image.open(path).convert("L")
    except OSError as exc:
        raise InterchangeError(f"cannot read mask {path}: {exc}") from exc
    return np.asarray(img) != 0


def load_mask_set(mask_manifest, base_dir) -> GroundTruthMaskSet:
    """Resolve mask paths against ``base_dir`` and load them into a set."""
    base = Path(base_dir)
    masks = []
    size = None
    for cls, rel in mask_manifest:
        p = Path(rel)
        if not p.is_absolute():
            p = base / p
        m = read_mask(p)
        if size is None:
            size = m.shape
        masks.append((cls, m))
    if size is None:
        raise InterchangeError("mask manifest is empty")
    return GroundTruthMaskSet(masks=tuple(masks), image_size=size)


@dataclass(frozen=True)
class ManifestEntry:
    """One JSON-Lines manifest record pointing at a sample's files."""

    sample_id: str
    features_path: str
    gradients_path: str
    meta_path: str
    mask_dir: Optional[str] = None
    variant_label: Optional[str] = None

    def resolve(self, root) -> "ManifestEntry":
        def fix(p):
            if p is None:
                return None
            q = Path(p)
            return str(q if q.is_absolute() else Path(root) / q)

        return ManifestEntry(
            sample_id=self.sample_id,
            features_path=fix(self.features_path),
            gradients_path=fix(self.gradients_path),
            meta_path=fix(self.meta_path),
            mask_dir=fix(self.mask_dir),
            variant_label=self.variant_label,
        )


def write_manifest(path, entries) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fp:
        for e in entries:
            rec = {
                "sample_id": e.sample_id,
                "features_path": e.features_path,
                "gradients_path": e.gradients_path,
                "meta_path": e.meta_path,
                "mask_dir": e.mask_dir,
            }
            if e.variant_label is not None:
                rec["variant_label"] = e.variant_label
            fp.write(json.dumps(rec, sort_keys=True) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    """Read a JSON-Lines manifest; relative paths resolve against the
    manifest's own directory.  Duplicate sample ids are rejected."""
    path = Path(path)
    root = path.parent
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise InterchangeError(f"cannot read manifest {path}: {exc}") from exc
    for n, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            entry = ManifestEntry(
                sample_id=str(rec["sample_id"]),
                features_path=str(rec["features_path"]),
                gradients_path=str(rec["gradients_path"]),
                meta_path=str(rec["meta_path"]),
                mask_dir=rec.get("mask_dir"),
                variant_label=rec.get("variant_label"),
            ).resolve(root)
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise InterchangeError(f"{path}:{n}: malformed manifest record: {exc}") from exc
        if entry.sample_id in seen:
            raise InterchangeError(f"{path}:{n}: duplicate sample_id {entry.sample_id!r}")
        seen.add(entry.sample_id)
        entries.append(entry)
    return entries
