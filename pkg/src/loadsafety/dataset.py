"""Dataset manifests, stratified splits, and stage relabeling.

A manifest is a JSON-lines file: one header line carrying the format
version and root convention, then one record per line.  Image files are
binary PPM as produced by the imaging module.  The synthetic generator
stands in for a real photo corpus; see the synthetic module for scene
semantics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import synthetic
from .imaging import read_ppm, resize_bilinear, write_ppm

MANIFEST_VERSION = 1

# class proportions of the reference corpus this generator stands in for;
# used by ratio="imbalanced" to reproduce its imbalance
REFERENCE_CLASS_COUNTS = {"SAFE": 1813, "UNSAFE": 2355, "UNUSABLE": 1544}

IMBALANCE_WARNING_RATIO = 1.5


class ClassLabel(str, Enum):
    SAFE = "SAFE"
    UNSAFE = "UNSAFE"
    UNUSABLE = "UNUSABLE"


ORIGINS = ("synthetic", "ingested", "reviewed")


class ManifestError(ValueError):
    pass


class ManifestParseError(ManifestError):
    pass


class DuplicateIdError(ManifestError):
    pass


class MissingFileError(ManifestError):
    pass


@dataclass(frozen=True)
class SampleRecord:
    id: str
    path: str  # relative to the manifest root
    label: ClassLabel
    origin: str

    def __post_init__(self):
        if self.origin not in ORIGINS:
            raise ManifestError(f"record {self.id}: unknown origin {self.origin!r}")


@dataclass
class DatasetManifest:
    root: Path
    records: list
    version: int = MANIFEST_VERSION

    def __post_init__(self):
        self.root = Path(self.root)

    def counts(self) -> dict:
        out = {label: 0 for label in ClassLabel}
        for rec in self.records:
            out[rec.label] += 1
        return out

    def resolve(self, rec: SampleRecord) -> Path:
        return self.root / rec.path


def save_manifest(manifest: DatasetManifest, path) -> None:
    path = Path(path)
    lines = [json.dumps({"version": manifest.version, "root": "."})]
    for rec in manifest.records:
        lines.append(json.dumps({
            "id": rec.id, "path": rec.path,
            "label": rec.label.value, "origin": rec.origin,
        }))
    path.write_text("\n".join(lines) + "\n")


def load_manifest(path) -> DatasetManifest:
    """Load and validate; duplicate ids and missing files are reported by id."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ManifestParseError(f"cannot read manifest {path}: {exc}") from exc
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ManifestParseError(f"{path}: empty manifest file (missing header)")
    try:
        header = json.loads(lines[0])
        version = header["version"]
    except (json.JSONDecodeError, TypeError, KeyError) as exc:
        raise ManifestParseError(f"{path}: bad header line: {exc}") from exc
    if version != MANIFEST_VERSION:
        raise ManifestParseError(
            f"{path}: manifest version {version}, supported {MANIFEST_VERSION}"
        )
    root = path.parent
    records = []
    seen = set()
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            data = json.loads(line)
            rec = SampleRecord(data["id"], data["path"],
                               ClassLabel(data["label"]), data["origin"])
        except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
            if isinstance(exc, ManifestError):
                raise
            raise ManifestParseError(f"{path}:{lineno}: bad record: {exc}") from exc
        if rec.id in seen:
            raise DuplicateIdError(f"{path}: duplicate record id {rec.id!r}")
        seen.add(rec.id)
        if not (root / rec.path).is_file():
            raise MissingFileError(
                f"{path}: record {rec.id!r} references missing file {rec.path}"
            )
        records.append(rec)
    return DatasetManifest(root, records, version)


def _largest_remainder(proportions, total):
    quotas = [p * total / sum(proportions) for p in proportions]
    counts = [math.floor(q) for q in quotas]
    shortfall = total - sum(counts)
    by_remainder = sorted(range(len(quotas)),
                          key=lambda i: (quotas[i] - counts[i]), reverse=True)
    for i in by_remainder[:shortfall]:
        counts[i] += 1
    return counts


def generate_synthetic(per_class: int, seed: int, size: int = 128,
                       root=None, ratio: str = "balanced") -> DatasetManifest:
    """Render a synthetic corpus under root and write its manifest.

    ratio="balanced" gives per_class images of each class; ratio="imbalanced"
    keeps the same total (3 * per_class) but splits it in the reference
    corpus proportions (largest-remainder rounding).
    """
    if per_class < 1:
        raise ValueError(f"per_class must be >= 1, got {per_class}")
    if ratio not in ("balanced", "imbalanced"):
        raise ValueError(f"ratio must be 'balanced' or 'imbalanced', got {ratio!r}")
    root = Path(root) if root is not None else Path("synthetic-data")
    (root / "images").mkdir(parents=True, exist_ok=True)

    labels = [ClassLabel.SAFE, ClassLabel.UNSAFE, ClassLabel.UNUSABLE]
    if ratio == "balanced":
        counts = [per_class] * 3
    else:
        counts = _largest_remainder(
            [REFERENCE_CLASS_COUNTS[l.value] for l in labels], 3 * per_class)

    records = []
    for label, count in zip(labels, counts):
        for index in range(count):
            img, meta = synthetic.render_scene(label.value, seed, index, size)
            rec_id = f"{label.value.lower()}-{index:05d}"
            rel = f"images/{rec_id}.ppm"
            write_ppm(img, root / rel)
            meta_path = root / f"images/{rec_id}.json"
            meta_path.write_text(json.dumps(meta, sort_keys=True) + "\n")
            records.append(SampleRecord(rec_id, rel, label, "synthetic"))

    manifest = DatasetManifest(root, records)
    save_manifest(manifest, root / "manifest.jsonl")
    return manifest


def split_stratified(manifest: DatasetManifest, val_fraction: float, seed: int):
    """Per-class seeded shuffle, floor(n * val_fraction) (at least 1) to
    validation; returns (train, val) manifests over the same root."""
    if not 0.0 < val_fraction < 1.0:
        raise ValueError(f"val_fraction must be in (0, 1), got {val_fraction}")
    by_class = {}
    for rec in manifest.records:
        by_class.setdefault(rec.label, []).append(rec)
    for label, recs in by_class.items():
        if len(recs) < 2:
            raise ValueError(
                f"class {label.value} has {len(recs)} record(s); need >= 2 to split"
            )
    val_ids = set()
    for label, recs in sorted(by_class.items(), key=lambda kv: kv[0].value):
        rng = np.random.Generator(
            np.random.Philox(key=[seed, synthetic._CLASS_CODES[label.value]]))
        order = rng.permutation(len(recs))
        n_val = max(1, math.floor(len(recs) * val_fraction))
        val_ids.update(recs[i].id for i in order[:n_val])
    train = [r for r in manifest.records if r.id not in val_ids]
    val = [r for r in manifest.records if r.id in val_ids]
    return (DatasetManifest(manifest.root, train, manifest.version),
            DatasetManifest(manifest.root, val, manifest.version))


STAGE_CLASS_NAMES = {1: ("USABLE", "UNUSABLE"), 2: ("SAFE", "UNSAFE")}


@dataclass
class StageView:
    """Binary-labeled view of a manifest for one stage of the decision tree."""
    stage: int
    class_names: tuple
    records: list  # (SampleRecord, int label) pairs
    root: Path
    warning: str = ""

    def labels(self):
        return [y for _, y in self.records]


def relabel_for_stage(manifest: DatasetManifest, stage: int) -> StageView:
    if stage not in (1, 2):
        raise ValueError(f"stage must be 1 or 2, got {stage}")
    pairs = []
    if stage == 1:
        for rec in manifest.records:
            pairs.append((rec, 1 if rec.label is ClassLabel.UNUSABLE else 0))
    else:
        for rec in manifest.records:
            if rec.label is ClassLabel.UNUSABLE:
                continue
            pairs.append((rec, 0 if rec.label is ClassLabel.SAFE else 1))
    warning = ""
    if not pairs:
        warning = "stage view is empty (no applicable records)"
    return StageView(stage, STAGE_CLASS_NAMES[stage], pairs, manifest.root, warning)


@dataclass
class ClassReport:
    counts: dict
    ratio: float  # max/min class size; inf when a class is empty
    warning: bool


def class_report(manifest: DatasetManifest) -> ClassReport:
    counts = manifest.counts()
    values = list(counts.values())
    smallest = min(values)
    largest = max(values)
    ratio = math.inf if smallest == 0 else largest / smallest
    return ClassReport({k.value: v for k, v in counts.items()},
                       ratio, ratio > IMBALANCE_WARNING_RATIO)


def load_stage_arrays(view: StageView, resolution: int):
    """Read, resize, and stack a stage view into (N,3,R,R) float32 + labels."""
    if not view.records:
        raise ValueError("stage view has no records to load")
    images = np.empty((len(view.records), 3, resolution, resolution), dtype=np.float32)
    labels = np.empty(len(view.records), dtype=np.int64)
    for i, (rec, y) in enumerate(view.records):
        img = read_ppm(view.root / rec.path)
        img = resize_bilinear(img, resolution, resolution)
        images[i] = img.pixels.transpose(2, 0, 1)
        labels[i] = y
    return images, labels
