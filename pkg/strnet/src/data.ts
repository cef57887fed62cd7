import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";

import { PIXEL_MEAN, PIXEL_STD } from "./config";
import { GrayImage } from "./augment";
import { Rng } from "./rng";

/**
 * Dataset plumbing: the manifest CSV schema shared with the evaluation
 * toolkit, grayscale PNG loading, covariate standardization with
 * mean-imputation for absent values, and a synthetic separable dataset
 * for sanity runs.
 */

export interface ManifestRecord {
  sampleId: string;
  imagePath: string;
  split: string;
  classLabel: number | null;
  tScore: number | null;
  age: number | null;
  sex: string | null;
  bmi: number | null;
  stage: string;
}

const MANIFEST_HEADER =
  "sample_id,image_path,split,class_label,t_score,age,sex,bmi,stage";

export function parseManifest(csvText: string): ManifestRecord[] {
  const lines = csvText.trim().split(/\r?\n/);
  if (lines[0] !== MANIFEST_HEADER) {
    throw new Error(`manifest header must be "${MANIFEST_HEADER}", got "${lines[0]}"`);
  }
  const opt = (v: string): number | null => (v === "" ? null : Number(v));
  return lines.slice(1).map((line, i) => {
    const cells = line.split(",");
    if (cells.length !== 9) {
      throw new Error(`manifest line ${i + 2}: expected 9 fields, got ${cells.length}`);
    }
    const [sampleId, imagePath, split, classLabel, tScore, age, sex, bmi, stage] = cells;
    return {
      sampleId,
      imagePath,
      split,
      classLabel: classLabel === "" ? null : Number(classLabel),
      tScore: opt(tScore),
      age: opt(age),
      sex: sex === "" ? null : sex,
      bmi: opt(bmi),
      stage,
    };
  });
}

export function readManifest(filePath: string): ManifestRecord[] {
  return parseManifest(fs.readFileSync(filePath, "utf-8"));
}

/** Read an 8-bit grayscale (or gray-ish RGB) PNG into a float image. */
export function readPngGray(filePath: string): GrayImage {
  const png = PNG.sync.read(fs.readFileSync(filePath));
  const pixels = new Float32Array(png.width * png.height);
  for (let i = 0; i < pixels.length; i++) {
    const r = png.data[4 * i];
    const g = png.data[4 * i + 1];
    const b = png.data[4 * i + 2];
    pixels[i] = r === g && g === b ? r : Math.round(0.299 * r + 0.587 * g + 0.114 * b);
  }
  return { width: png.width, height: png.height, pixels };
}

export function writePngGray(filePath: string, image: GrayImage): void {
  const png = new PNG({ width: image.width, height: image.height });
  for (let i = 0; i < image.pixels.length; i++) {
    const v = Math.max(0, Math.min(255, Math.round(image.pixels[i])));
    png.data[4 * i] = v;
    png.data[4 * i + 1] = v;
    png.data[4 * i + 2] = v;
    png.data[4 * i + 3] = 255;
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, PNG.sync.write(png));
}

/** One loadable sample: image plus every label the losses may need. */
export interface Sample {
  sampleId: string;
  split: string;
  image: GrayImage;
  /** 1 = Bone Loss (class 1 or 2), 0 = Normal. */
  screenLabel: number;
  /** 1 = Osteoporosis; only meaningful when screenLabel is 1. */
  severeLabel: number;
  tScore: number | null;
  covariates: [number | null, number | null, number | null]; // age, sex, bmi
}

export function sampleFromRecord(record: ManifestRecord, image: GrayImage): Sample {
  if (record.classLabel === null) {
    throw new Error(`record ${record.sampleId} has no class label`);
  }
  return {
    sampleId: record.sampleId,
    split: record.split,
    image,
    screenLabel: record.classLabel > 0 ? 1 : 0,
    severeLabel: record.classLabel === 2 ? 1 : 0,
    tScore: record.tScore,
    covariates: [record.age, record.sex === null ? null : record.sex === "male" ? 1 : 0, record.bmi],
  };
}

export function loadSamples(records: ManifestRecord[], imagesDir: string): {
  samples: Sample[];
  skipped: string[];
} {
  const samples: Sample[] = [];
  const skipped: string[] = [];
  for (const record of records) {
    try {
      const image = readPngGray(path.join(imagesDir, record.imagePath));
      samples.push(sampleFromRecord(record, image));
    } catch (err) {
      skipped.push(`${record.sampleId}: ${(err as Error).message}`);
    }
  }
  return { samples, skipped };
}

/** Per-feature mean/SD over the training split, for standardization. */
export interface CovariateStats {
  mean: [number, number, number];
  sd: [number, number, number];
}

export function covariateStats(samples: Sample[]): CovariateStats {
  const mean: [number, number, number] = [0, 0, 0];
  const sd: [number, number, number] = [1, 1, 1];
  for (let f = 0; f < 3; f++) {
    const values = samples
      .map((s) => s.covariates[f])
      .filter((v): v is number => v !== null);
    if (values.length === 0) continue;
    const m = values.reduce((a, b) => a + b, 0) / values.length;
    const variance =
      values.reduce((a, b) => a + (b - m) * (b - m), 0) / Math.max(values.length - 1, 1);
    mean[f] = m;
    sd[f] = variance > 0 ? Math.sqrt(variance) : 1;
  }
  return { mean, sd };
}

/** Standardized covariates; absent values are mean-imputed, i.e. zeros. */
export function standardizeCovariates(
  samples: Sample[],
  stats: CovariateStats
): Float32Array {
  const out = new Float32Array(samples.length * 3);
  samples.forEach((sample, i) => {
    for (let f = 0; f < 3; f++) {
      const v = sample.covariates[f];
      out[3 * i + f] = v === null ? 0 : (v - stats.mean[f]) / stats.sd[f];
    }
  });
  return out;
}

/** Stack images into a normalized [n, s, s, 1] tensor. */
export function imagesToTensor(images: GrayImage[], size: number): tf.Tensor4D {
  const data = new Float32Array(images.length * size * size);
  images.forEach((image, i) => {
    if (image.width !== size || image.height !== size) {
      throw new Error(
        `image ${i} is ${image.width}x${image.height}, expected ${size}x${size}`
      );
    }
    const base = i * size * size;
    for (let p = 0; p < size * size; p++) {
      data[base + p] = (image.pixels[p] / 255 - PIXEL_MEAN) / PIXEL_STD;
    }
  });
  return tf.tensor4d(data, [images.length, size, size, 1]);
}

/**
 * Separable synthetic cohort: Bone-Loss images carry a bright centered
 * disc (stronger for Osteoporosis), Normal images are dim noise. T-score
 * targets follow the class structure so the regression branch has signal.
 */
export function makeToyDataset(n: number, size: number, seed: number): Sample[] {
  const rng = new Rng(seed);
  const samples: Sample[] = [];
  for (let i = 0; i < n; i++) {
    const positive = i % 2 === 0;
    const severe = positive && i % 4 === 0;
    const pixels = new Float32Array(size * size);
    for (let p = 0; p < pixels.length; p++) pixels[p] = 20 + 20 * rng.next();
    if (positive) {
      const cx = size / 2 + rng.uniform(-2, 2);
      const cy = size / 2 + rng.uniform(-2, 2);
      const radius = size * (severe ? 0.34 : 0.26);
      const strength = severe ? 200 : 140;
      for (let y = 0; y < size; y++) {
        for (let x = 0; x < size; x++) {
          const d2 = (x - cx) ** 2 + (y - cy) ** 2;
          if (d2 < radius * radius) {
            pixels[y * size + x] = Math.min(255, strength + 30 * rng.next());
          }
        }
      }
    }
    const tScore = positive ? (severe ? -3 : -1.8) + 0.2 * rng.normal() : -0.4 + 0.2 * rng.normal();
    samples.push({
      sampleId: `toy${i.toString().padStart(4, "0")}`,
      split: i % 5 === 4 ? "val" : "train",
      image: { width: size, height: size, pixels },
      screenLabel: positive ? 1 : 0,
      severeLabel: severe ? 1 : 0,
      tScore,
      covariates: [55 + 10 * rng.normal(), rng.next() < 0.5 ? 0 : 1, 26 + 3 * rng.normal()],
    });
  }
  return samples;
}
