"""Manifest handling, dataset composition, and near-duplicate auditing.

Covers the data-hygiene half of the toolkit: merging stage manifests with
case-insensitive path deduplication, mapping T-scores to the standard
WHO bone-status categories, 64-bit perceptual hashing, cross-split
near-duplicate detection, and per-split composition tables with the
BoneLoss (= Osteopenia + Osteoporosis) rollup.

Manifest files are UTF-8 CSV with the header
``sample_id,image_path,split,class_label,t_score,age,sex,bmi,stage``;
an empty field means "absent".
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import NamedTuple

import numpy as np

from .errors import ValidationError
from .image_pipeline import _resize_bilinear_float

__all__ = [
    "ClassLabel",
    "CompositionTable",
    "LeakagePair",
    "MergeResult",
    "SampleRecord",
    "SplitManifest",
    "composition_table",
    "hamming",
    "leakage_scan",
    "merge_stages",
    "phash64",
    "read_manifest",
    "who_category",
    "write_manifest",
]

MANIFEST_COLUMNS = (
    "sample_id",
    "image_path",
    "split",
    "class_label",
    "t_score",
    "age",
    "sex",
    "bmi",
    "stage",
)

SPLITS = ("train", "val", "test", "external")
STAGES = ("stage1", "stage2", "external")
SEXES = ("female", "male")


class ClassLabel(IntEnum):
    NORMAL = 0
    OSTEOPENIA = 1
    OSTEOPOROSIS = 2


@dataclass(frozen=True)
class SampleRecord:
    """One image's identity, split assignment, label, and covariates."""

    sample_id: str
    image_path: str
    split: str
    stage: str
    class_label: ClassLabel | None = None
    t_score: float | None = None
    age: float | None = None
    sex: str | None = None
    bmi: float | None = None

    def __post_init__(self) -> None:
        if not self.sample_id:
            raise ValidationError("sample_id must be nonempty")
        if not self.image_path:
            raise ValidationError(f"record {self.sample_id}: image_path must be nonempty")
        if self.split not in SPLITS:
            raise ValidationError(f"record {self.sample_id}: unknown split {self.split!r}")
        if self.stage not in STAGES:
            raise ValidationError(f"record {self.sample_id}: unknown stage {self.stage!r}")
        if self.sex is not None and self.sex not in SEXES:
            raise ValidationError(f"record {self.sample_id}: unknown sex {self.sex!r}")
        if self.class_label is None and self.t_score is None:
            raise ValidationError(
                f"record {self.sample_id}: needs a class_label or a t_score"
            )
        if self.t_score is not None and not math.isfinite(self.t_score):
            raise ValidationError(f"record {self.sample_id}: t_score must be finite")


@dataclass(frozen=True)
class SplitManifest:
    """A deduplicated collection of sample records plus its provenance."""

    records: tuple[SampleRecord, ...]
    provenance: str = ""

    def __post_init__(self) -> None:
        seen_ids: set[str] = set()
        seen_paths: set[str] = set()
        for rec in self.records:
            if rec.sample_id in seen_ids:
                raise ValidationError(f"duplicate sample_id {rec.sample_id!r}")
            folded = rec.image_path.casefold()
            if folded in seen_paths:
                raise ValidationError(
                    f"duplicate image_path (case-insensitive): {rec.image_path!r}"
                )
            seen_ids.add(rec.sample_id)
            seen_paths.add(folded)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class MergeResult:
    manifest: SplitManifest
    collisions: int
    label_conflicts: tuple[str, ...] = field(default=())


def merge_stages(a: SplitManifest, b: SplitManifest) -> MergeResult:
    """Union two manifests on case-folded image path; ``b`` wins collisions.

    The second manifest is treated as the richer one (it carries the
    covariates), so on a path collision its record replaces the first
    manifest's. Conflicting class labels are surfaced as warnings.
    """
    by_path: dict[str, SampleRecord] = {r.image_path.casefold(): r for r in a.records}
    collisions = 0
    conflicts: list[str] = []
    merged: list[SampleRecord] = list(a.records)
    index_of = {r.image_path.casefold(): i for i, r in enumerate(a.records)}

    for rec in b.records:
        folded = rec.image_path.casefold()
        if folded in by_path:
            collisions += 1
            prior = by_path[folded]
            if (
                prior.class_label is not None
                and rec.class_label is not None
                and prior.class_label != rec.class_label
            ):
                conflicts.append(
                    f"{rec.image_path}: class_label {prior.class_label.value} -> "
                    f"{rec.class_label.value}"
                )
            merged[index_of[folded]] = rec
        else:
            index_of[folded] = len(merged)
            merged.append(rec)
            by_path[folded] = rec

    provenance = f"merge({a.provenance or 'a'}, {b.provenance or 'b'})"
    return MergeResult(
        manifest=SplitManifest(records=tuple(merged), provenance=provenance),
        collisions=collisions,
        label_conflicts=tuple(conflicts),
    )


def who_category(t_score: float) -> ClassLabel:
    """Map a T-score to its WHO bone-status category.

    Normal for t >= -1.0, Osteoporosis for t <= -2.5, Osteopenia in the
    open interval between.
    """
    if not math.isfinite(t_score):
        raise ValidationError(f"t_score must be finite, got {t_score}")
    if t_score >= -1.0:
        return ClassLabel.NORMAL
    if t_score <= -2.5:
        return ClassLabel.OSTEOPOROSIS
    return ClassLabel.OSTEOPENIA


def _dct2_matrix(n: int) -> np.ndarray:
    # Unnormalized type-II DCT basis; overall scale is irrelevant because
    # the hash only compares coefficients against their median.
    k = np.arange(n, dtype=np.float64)[:, None]
    m = np.arange(n, dtype=np.float64)[None, :]
    return np.cos(np.pi * (2.0 * m + 1.0) * k / (2.0 * n))


_DCT32 = _dct2_matrix(32)


def phash64(image: np.ndarray) -> int:
    """64-bit perceptual hash: 32x32 bilinear resize, 2-D DCT-II, 8x8 block.

    Bit k (row-major over the low-frequency 8x8 block, most significant
    first) is set iff that coefficient exceeds the median of the block's
    63 non-DC coefficients; the DC bit is compared against the same
    median. Accepts uint8 or float 2-D arrays.
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2 or image.size == 0:
        raise ValidationError(f"expected a nonempty 2-D image, got shape {image.shape}")
    small = _resize_bilinear_float(image, 32, 32)
    coeffs = _DCT32 @ small @ _DCT32.T
    block = coeffs[:8, :8].ravel()
    median = float(np.median(block[1:]))
    digest = 0
    for k, value in enumerate(block):
        if value > median:
            digest |= 1 << (63 - k)
    return digest


def hamming(a: int, b: int) -> int:
    """Number of differing bits between two 64-bit digests."""
    return ((a ^ b) & 0xFFFFFFFFFFFFFFFF).bit_count()


class LeakagePair(NamedTuple):
    sample_a: str
    sample_b: str
    split_a: str
    split_b: str
    distance: int


def leakage_scan(
    manifest: SplitManifest,
    digests: dict[str, int],
    max_distance: int = 4,
) -> list[LeakagePair]:
    """Find cross-split near-duplicates: pairs at Hamming distance <= limit.

    Every record must have a digest. Pairs within the same split are not
    leakage and are excluded. Results are sorted by distance, then ids;
    an empty list is a clean audit.
    """
    for rec in manifest.records:
        if rec.sample_id not in digests:
            raise ValidationError(f"no digest for record {rec.sample_id!r}")

    pairs: list[LeakagePair] = []
    records = manifest.records
    for i in range(len(records)):
        for j in range(i + 1, len(records)):
            ri, rj = records[i], records[j]
            if ri.split == rj.split:
                continue
            dist = hamming(digests[ri.sample_id], digests[rj.sample_id])
            if dist <= max_distance:
                first, second = sorted((ri, rj), key=lambda r: r.sample_id)
                pairs.append(
                    LeakagePair(
                        sample_a=first.sample_id,
                        sample_b=second.sample_id,
                        split_a=first.split,
                        split_b=second.split,
                        distance=dist,
                    )
                )
    pairs.sort(key=lambda p: (p.distance, p.sample_a, p.sample_b))
    return pairs


CLASS_FIELDS = ("normal", "osteopenia", "osteoporosis")


@dataclass(frozen=True)
class CompositionTable:
    """Per-split class counts with the BoneLoss rollup and marginal sums."""

    counts: dict[str, dict[str, int]]

    def split_total(self, split: str) -> int:
        row = self.counts[split]
        return row["normal"] + row["osteopenia"] + row["osteoporosis"]

    def class_total(self, name: str) -> int:
        return sum(row[name] for row in self.counts.values())

    @property
    def total(self) -> int:
        return sum(self.split_total(s) for s in self.counts)

    def as_dict(self) -> dict:
        table = {}
        for split, row in self.counts.items():
            table[split] = dict(row)
            table[split]["total"] = self.split_total(split)
        table["total"] = {name: self.class_total(name) for name in CLASS_FIELDS}
        table["total"]["bone_loss"] = self.class_total("bone_loss")
        table["total"]["total"] = self.total
        return table


def effective_label(record: SampleRecord) -> ClassLabel:
    """The record's class label, inferred from its T-score when absent."""
    if record.class_label is not None:
        return record.class_label
    if record.t_score is not None:
        return who_category(record.t_score)
    raise ValidationError(f"record {record.sample_id!r} has neither label nor t_score")


def composition_table(manifest: SplitManifest) -> CompositionTable:
    """Count records per split and class; BoneLoss = Osteopenia + Osteoporosis."""
    counts: dict[str, dict[str, int]] = {}
    for rec in manifest.records:
        row = counts.setdefault(
            rec.split, {"normal": 0, "osteopenia": 0, "osteoporosis": 0, "bone_loss": 0}
        )
        label = effective_label(rec)
        row[CLASS_FIELDS[label.value]] += 1
        if label != ClassLabel.NORMAL:
            row["bone_loss"] += 1
    ordered = {s: counts[s] for s in SPLITS if s in counts}
    return CompositionTable(counts=ordered)


def _parse_optional_float(value: str, column: str, line: int) -> float | None:
    if value == "":
        return None
    try:
        return float(value)
    except ValueError as exc:
        raise ValidationError(f"line {line}: bad {column} value {value!r}") from exc


def read_manifest(path: str | Path, provenance: str | None = None) -> SplitManifest:
    """Parse a manifest CSV into a validated SplitManifest."""
    path = Path(path)
    records: list[SampleRecord] = []
    with path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or tuple(reader.fieldnames) != MANIFEST_COLUMNS:
            raise ValidationError(
                f"{path}: expected header {','.join(MANIFEST_COLUMNS)}, "
                f"got {reader.fieldnames}"
            )
        for line, row in enumerate(reader, start=2):
            label_raw = (row["class_label"] or "").strip()
            label = None
            if label_raw != "":
                try:
                    label = ClassLabel(int(label_raw))
                except ValueError as exc:
                    raise ValidationError(
                        f"{path} line {line}: bad class_label {label_raw!r}"
                    ) from exc
            records.append(
                SampleRecord(
                    sample_id=row["sample_id"].strip(),
                    image_path=row["image_path"].strip(),
                    split=row["split"].strip(),
                    stage=row["stage"].strip(),
                    class_label=label,
                    t_score=_parse_optional_float(row["t_score"], "t_score", line),
                    age=_parse_optional_float(row["age"], "age", line),
                    sex=(row["sex"].strip() or None),
                    bmi=_parse_optional_float(row["bmi"], "bmi", line),
                )
            )
    return SplitManifest(records=tuple(records), provenance=provenance or str(path))


def write_manifest(manifest: SplitManifest, path: str | Path) -> None:
    """Write a manifest back out in the canonical CSV schema."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(MANIFEST_COLUMNS)
        for rec in manifest.records:
            writer.writerow(
                [
                    rec.sample_id,
                    rec.image_path,
                    rec.split,
                    "" if rec.class_label is None else rec.class_label.value,
                    "" if rec.t_score is None else repr(rec.t_score),
                    "" if rec.age is None else repr(rec.age),
                    rec.sex or "",
                    "" if rec.bmi is None else repr(rec.bmi),
                    rec.stage,
                ]
            )
