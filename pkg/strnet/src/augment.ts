import { AugmentConfig, defaultAugmentConfig } from "./config";
import { Rng } from "./rng";

/**
 * Training-time transforms on 8-bit grayscale images (values 0..255,
 * row-major Float32Array), applied before tensor normalization:
 * horizontal flip, a small random affine (rotation, translation, scale)
 * resampled bilinearly with zeros outside the frame, and random border
 * strips replaced by the image's median value.
 */

export interface GrayImage {
  width: number;
  height: number;
  pixels: Float32Array;
}

export function medianValue(pixels: Float32Array): number {
  const sorted = Float32Array.from(pixels).sort();
  const mid = sorted.length >> 1;
  return sorted.length % 2 === 1 ? sorted[mid] : (sorted[mid - 1] + sorted[mid]) / 2;
}

export function hflip(image: GrayImage): GrayImage {
  const { width, height, pixels } = image;
  const out = new Float32Array(pixels.length);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      out[y * width + x] = pixels[y * width + (width - 1 - x)];
    }
  }
  return { width, height, pixels: out };
}

/** Affine warp with half-pixel-center sampling; out-of-frame reads are 0. */
export function affine(
  image: GrayImage,
  rotationDeg: number,
  txFrac: number,
  tyFrac: number,
  scale: number
): GrayImage {
  const { width, height, pixels } = image;
  const out = new Float32Array(pixels.length);
  const theta = (rotationDeg * Math.PI) / 180;
  const cos = Math.cos(theta);
  const sin = Math.sin(theta);
  const cx = (width - 1) / 2;
  const cy = (height - 1) / 2;
  const tx = txFrac * width;
  const ty = tyFrac * height;

  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      // invert: p = R(-theta)/s * (p' - c - t) + c
      const dx = (x - cx - tx) / scale;
      const dy = (y - cy - ty) / scale;
      const sx = cos * dx + sin * dy + cx;
      const sy = -sin * dx + cos * dy + cy;
      if (sx < -0.5 || sy < -0.5 || sx > width - 0.5 || sy > height - 0.5) continue;
      const x0 = Math.floor(sx);
      const y0 = Math.floor(sy);
      const fx = sx - x0;
      const fy = sy - y0;
      const at = (yy: number, xx: number) =>
        yy < 0 || xx < 0 || yy >= height || xx >= width ? 0 : pixels[yy * width + xx];
      const top = at(y0, x0) * (1 - fx) + at(y0, x0 + 1) * fx;
      const bottom = at(y0 + 1, x0) * (1 - fx) + at(y0 + 1, x0 + 1) * fx;
      out[y * width + x] = top * (1 - fy) + bottom * fy;
    }
  }
  return { width, height, pixels: out };
}

export function borderMask(
  image: GrayImage,
  leftFrac: number,
  rightFrac: number,
  topFrac: number,
  bottomFrac: number
): GrayImage {
  const { width, height, pixels } = image;
  const fill = medianValue(pixels);
  const out = Float32Array.from(pixels);
  const left = Math.round(leftFrac * width);
  const right = Math.round(rightFrac * width);
  const top = Math.round(topFrac * height);
  const bottom = Math.round(bottomFrac * height);
  for (let y = 0; y < height; y++) {
    for (let x = 0; x < width; x++) {
      if (x < left || x >= width - right || y < top || y >= height - bottom) {
        out[y * width + x] = fill;
      }
    }
  }
  return { width, height, pixels: out };
}

export function augment(
  image: GrayImage,
  rng: Rng,
  config: Partial<AugmentConfig> = {}
): GrayImage {
  const c = { ...defaultAugmentConfig, ...config };
  let out = image;
  if (rng.next() < c.hflipP) out = hflip(out);
  const rotation = rng.uniform(-c.maxRotationDeg, c.maxRotationDeg);
  const tx = rng.uniform(-c.maxTranslation, c.maxTranslation);
  const ty = rng.uniform(-c.maxTranslation, c.maxTranslation);
  const scale = rng.uniform(c.scaleLo, c.scaleHi);
  out = affine(out, rotation, tx, ty, scale);
  if (rng.next() < c.borderMaskP) {
    out = borderMask(
      out,
      rng.uniform(0, c.borderMaskMax),
      rng.uniform(0, c.borderMaskMax),
      rng.uniform(0, c.borderMaskMax),
      rng.uniform(0, c.borderMaskMax)
    );
  }
  return out;
}
