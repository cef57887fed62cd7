import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";
import { PNG } from "pngjs";

import { GrayImage } from "./augment";
import { imagesToTensor } from "./data";
import { StrNet } from "./model";

/**
 * Grad-CAM over the backbone's last convolutional block: channel weights
 * are spatially averaged gradients of the chosen head's output, the
 * weighted activation map is rectified, min-max normalized to [0, 1],
 * and bilinearly upsampled to the input resolution.
 */

export type CamHead = "screen" | "severe" | "tscore";

/** Pure CAM math on a precomputed activation/gradient pair. */
export function camFromActivations(
  activations: tf.Tensor4D,
  grads: tf.Tensor4D
): tf.Tensor2D {
  return tf.tidy(() => {
    const channelWeights = tf.mean(grads, [1, 2], true); // [1,1,1,c]
    const weighted = tf.sum(tf.mul(activations, channelWeights), 3); // [1,h,w]
    const rectified = tf.relu(weighted.squeeze([0])) as tf.Tensor2D;
    const lo = tf.min(rectified);
    const hi = tf.max(rectified);
    const span = tf.sub(hi, lo);
    const flat = tf.zerosLike(rectified);
    const normalized = tf.div(tf.sub(rectified, lo), span) as tf.Tensor2D;
    // constant maps (span 0) become all-zero rather than NaN
    return tf.where(tf.greater(span, 0), normalized, flat) as tf.Tensor2D;
  });
}

export function upsampleCam(cam: tf.Tensor2D, size: number): tf.Tensor2D {
  return tf.tidy(() => {
    const grid = cam.expandDims(-1).expandDims(0) as tf.Tensor4D;
    const resized = tf.image.resizeBilinear(grid, [size, size], false, true);
    return resized.squeeze([0, 3]) as tf.Tensor2D;
  });
}

export function gradCam(model: StrNet, image: GrayImage, head: CamHead): Float32Array {
  if (head === "severe" && !model.config.useSevereHead) {
    throw new Error("severity head is disabled in this configuration");
  }
  if (head === "tscore" && !model.config.useTscoreBranch) {
    throw new Error("T-score branch is disabled in this configuration");
  }
  const size = model.config.inputSize;
  const images = imagesToTensor([image], size);
  const features = model.features(images, false);

  const headValue = (act: tf.Tensor4D): tf.Scalar => {
    const outputs = model.headsFromFeatures(act, null, false);
    const selected =
      head === "screen"
        ? outputs.screenLogit
        : head === "severe"
          ? outputs.severeLogit!
          : outputs.tscorePred!;
    return tf.reshape(selected, []) as tf.Scalar;
  };

  const grads = tf.grad((act: tf.Tensor) => headValue(act as tf.Tensor4D))(
    features
  ) as tf.Tensor4D;
  const cam = camFromActivations(features, grads);
  const up = upsampleCam(cam, size);
  const data = up.dataSync() as Float32Array;
  images.dispose();
  features.dispose();
  grads.dispose();
  cam.dispose();
  up.dispose();
  return Float32Array.from(data);
}

/** Classic jet colormap: blue -> cyan -> yellow -> red over [0, 1]. */
export function jetColor(v: number): [number, number, number] {
  const clamp = (x: number) => Math.max(0, Math.min(1, x));
  const value = clamp(v);
  const r = clamp(1.5 - Math.abs(4 * value - 3));
  const g = clamp(1.5 - Math.abs(4 * value - 2));
  const b = clamp(1.5 - Math.abs(4 * value - 1));
  return [Math.round(255 * r), Math.round(255 * g), Math.round(255 * b)];
}

/** Blend the heatmap over the radiograph and write a color PNG. */
export function writeOverlayPng(
  filePath: string,
  image: GrayImage,
  cam: Float32Array,
  alpha = 0.5
): void {
  const { width, height, pixels } = image;
  const png = new PNG({ width, height });
  for (let i = 0; i < pixels.length; i++) {
    const gray = Math.max(0, Math.min(255, pixels[i]));
    const [r, g, b] = jetColor(cam[i]);
    png.data[4 * i] = Math.round((1 - alpha) * gray + alpha * r);
    png.data[4 * i + 1] = Math.round((1 - alpha) * gray + alpha * g);
    png.data[4 * i + 2] = Math.round((1 - alpha) * gray + alpha * b);
    png.data[4 * i + 3] = 255;
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, PNG.sync.write(png));
}
