import * as tf from "@tensorflow/tfjs";

import { TrainConfig, defaultTrainConfig } from "./config";
import { ForwardOutputs } from "./model";
import { bceWithLogits, smoothL1 } from "./ops";

/**
 * Multi-task objective: weighted screening BCE, severity BCE masked to
 * Bone-Loss samples, and Smooth-L1 on samples with a reference T-score,
 * combined as screen + lambda_s * severe + lambda_t * tscore. The
 * T-score term joins only after the warmup epoch count; before that the
 * total is computed without touching the T-score predictions at all.
 */

export interface BatchTargets {
  /** Binary screening labels (1 = Bone Loss) for every sample. */
  screenLabels: tf.Tensor;
  /** Severity labels (1 = Osteoporosis); only read where severeMask is 1. */
  severeLabels: tf.Tensor;
  /** 1 for Bone-Loss samples, 0 for Normal. */
  severeMask: tf.Tensor;
  /** Reference T-scores; only read where tscoreMask is 1. */
  tscoreTargets: tf.Tensor;
  tscoreMask: tf.Tensor;
}

export interface ClassWeights {
  positive: number;
  negative: number;
}

/** Inverse-prevalence weights, normalized to average 1 over the split. */
export function classWeightsFromLabels(labels: ArrayLike<number>): ClassWeights {
  let positives = 0;
  for (let i = 0; i < labels.length; i++) positives += labels[i] > 0 ? 1 : 0;
  const negatives = labels.length - positives;
  if (positives === 0 || negatives === 0) {
    throw new Error("class weights need both classes in the training split");
  }
  return {
    positive: labels.length / (2 * positives),
    negative: labels.length / (2 * negatives),
  };
}

function weightedMaskedBce(
  logits: tf.Tensor,
  labels: tf.Tensor,
  weights: ClassWeights,
  mask: tf.Tensor | null
): tf.Tensor {
  const perSample = bceWithLogits(logits, labels);
  const w = tf.add(
    tf.mul(labels, weights.positive),
    tf.mul(tf.sub(1, labels), weights.negative)
  );
  let weighted = tf.mul(perSample, w);
  if (mask === null) return tf.mean(weighted);
  weighted = tf.mul(weighted, mask);
  // masked mean; an empty mask gives exactly 0/1 = 0, never NaN
  return tf.div(tf.sum(weighted), tf.maximum(tf.sum(mask), 1));
}

export interface LossBreakdown {
  total: tf.Scalar;
  screen: tf.Scalar;
  severe: tf.Scalar;
  tscore: tf.Scalar;
}

export function multitaskLoss(
  outputs: ForwardOutputs,
  targets: BatchTargets,
  epoch: number,
  config: Partial<TrainConfig> = {},
  screenWeights: ClassWeights = { positive: 1, negative: 1 },
  severeWeights: ClassWeights = screenWeights
): LossBreakdown {
  const c = { ...defaultTrainConfig, ...config };

  const screen = weightedMaskedBce(
    outputs.screenLogit,
    targets.screenLabels,
    screenWeights,
    null
  ) as tf.Scalar;

  const severe = (
    outputs.severeLogit !== null
      ? weightedMaskedBce(
          outputs.severeLogit,
          targets.severeLabels,
          severeWeights,
          targets.severeMask
        )
      : tf.scalar(0)
  ) as tf.Scalar;

  let tscore: tf.Scalar;
  let total: tf.Scalar;
  const warmupOver = epoch >= c.tscoreWarmupEpochs;
  if (outputs.tscorePred !== null && warmupOver) {
    const perSample = tf.mul(
      smoothL1(outputs.tscorePred, targets.tscoreTargets),
      targets.tscoreMask
    );
    tscore = tf.div(
      tf.sum(perSample),
      tf.maximum(tf.sum(targets.tscoreMask), 1)
    ) as tf.Scalar;
    total = tf.add(
      screen,
      tf.add(tf.mul(c.lambdaSevere, severe), tf.mul(c.lambdaTscore, tscore))
    ) as tf.Scalar;
  } else {
    // warmup (or no branch): the total never reads the T-score predictions
    tscore = tf.scalar(0);
    total = tf.add(screen, tf.mul(c.lambdaSevere, severe)) as tf.Scalar;
  }

  return { total, screen, severe, tscore };
}
