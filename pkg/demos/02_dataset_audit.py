# Merge two stage manifests, map T-scores to WHO categories, build the
# composition table, and catch a planted cross-split duplicate by pHash.
import numpy as np

from screenkit import (
    ClassLabel,
    SampleRecord,
    SplitManifest,
    composition_table,
    hamming,
    leakage_scan,
    merge_stages,
    phash64,
    who_category,
)

# WHO category boundaries.
for t in (-0.3, -1.0, -1.7, -2.5, -3.1):
    print(f"T-score {t:+.1f} -> {who_category(t).name}")

# Two stages that overlap on one image path (case-insensitively).
stage1 = SplitManifest(
    records=tuple(
        SampleRecord(sample_id=f"s1_{i}", image_path=f"knee_{i}.png", split="train",
                     stage="stage1", class_label=ClassLabel(i % 3))
        for i in range(6)
    ),
    provenance="stage1",
)
stage2 = SplitManifest(
    records=(
        SampleRecord(sample_id="s2_a", image_path="KNEE_3.png", split="train",
                     stage="stage2", class_label=ClassLabel.OSTEOPENIA,
                     t_score=-1.9, age=61.0, sex="female", bmi=27.4),
        SampleRecord(sample_id="s2_b", image_path="knee_99.png", split="val",
                     stage="stage2", class_label=ClassLabel.NORMAL, t_score=-0.4),
    ),
    provenance="stage2",
)
merged = merge_stages(stage1, stage2)
print(f"\nmerged: {len(merged.manifest)} records, {merged.collisions} collision(s), "
      f"{len(merged.label_conflicts)} label conflict(s)")

table = composition_table(merged.manifest)
for split, row in table.counts.items():
    print(f"  {split:>5}: {row} (total {table.split_total(split)})")

# Perceptual hashing: a duplicated image placed in two different splits
# is flagged at Hamming distance 0; unrelated images sit near distance 32.
rng = np.random.default_rng(0)
img = rng.integers(0, 256, (64, 64), dtype=np.uint8)
other = rng.integers(0, 256, (64, 64), dtype=np.uint8)
print(f"\nhamming(duplicate) = {hamming(phash64(img), phash64(img.copy()))}")
print(f"hamming(unrelated) = {hamming(phash64(img), phash64(other))}")

pair_manifest = SplitManifest(
    records=(
        SampleRecord(sample_id="train_dup", image_path="a.png", split="train",
                     stage="stage1", class_label=ClassLabel.NORMAL),
        SampleRecord(sample_id="test_dup", image_path="b.png", split="test",
                     stage="stage1", class_label=ClassLabel.NORMAL),
        SampleRecord(sample_id="test_ok", image_path="c.png", split="test",
                     stage="stage1", class_label=ClassLabel.NORMAL),
    )
)
digests = {
    "train_dup": phash64(img),
    "test_dup": phash64(img.copy()),
    "test_ok": phash64(other),
}
for pair in leakage_scan(pair_manifest, digests, max_distance=4):
    print(f"leakage: {pair.sample_a} ({pair.split_a}) ~ {pair.sample_b} "
          f"({pair.split_b}), distance {pair.distance}")
