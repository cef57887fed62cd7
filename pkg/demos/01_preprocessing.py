# Walk a synthetic radiograph through the four preprocessing stages and
# show what each one does, including the safe-fallback behavior.
import numpy as np

from screenkit import PreprocessConfig, foreground_bbox, otsu_threshold, preprocess_record
from screenkit.image_pipeline import percentile_clip_rescale, resize_bilinear

rng = np.random.default_rng(7)

# A bright "knee" on a dark collimated background, plus sensor noise.
frame = rng.integers(0, 12, (400, 300)).astype(np.uint8)
yy, xx = np.mgrid[0:400, 0:300]
knee = ((yy - 210) ** 2 / 140**2 + (xx - 150) ** 2 / 80**2) < 1.0
frame[knee] = (140 + 60 * rng.random(knee.sum())).astype(np.uint8)

otsu = otsu_threshold(frame)
print(f"Otsu level: {otsu.threshold} (degenerate: {otsu.degenerate})")

box = foreground_bbox(frame, otsu.threshold)
print(f"crop box: ({box.x0},{box.y0})-({box.x1},{box.y1}), "
      f"{100 * box.area / frame.size:.1f}% of the frame")

cropped = frame[box.y0:box.y1, box.x0:box.x1]
rescaled = percentile_clip_rescale(cropped, 1, 99)
print(f"after percentile rescale: min {rescaled.min()}, max {rescaled.max()}")

final = resize_bilinear(rescaled, 512)
print(f"final: {final.shape}, dtype {final.dtype}")

# The one-call version returns the same image plus a trace of what happened.
final2, trace = preprocess_record(frame)
assert (final == final2).all()
print(f"trace: {trace}")

# A nearly-empty frame triggers the fallback: the detected foreground is
# tiny (< 10% of the frame), so the full frame is kept.
sparse = np.zeros((200, 200), np.uint8)
sparse[95:105, 95:105] = 255
_, sparse_trace = preprocess_record(sparse, PreprocessConfig())
print(f"sparse frame used fallback: {sparse_trace.used_fallback}")
