import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";

import { augment } from "./augment";
import {
  ModelConfig,
  TrainConfig,
  defaultTrainConfig,
} from "./config";
import {
  CovariateStats,
  Sample,
  covariateStats,
  imagesToTensor,
  standardizeCovariates,
} from "./data";
import { BatchTargets, ClassWeights, classWeightsFromLabels, multitaskLoss } from "./loss";
import { averagePrecision, aurocTrapezoid, sigmoid } from "./metrics";
import { StrNet } from "./model";
import { globalNorm } from "./ops";
import { derivedRng } from "./rng";

/**
 * Training loop: decoupled-weight-decay Adam, global-norm gradient
 * clipping, validation-AUPRC plateau scheduling and early stopping, and
 * best-checkpoint tracking. Improvement means a strict AUPRC increase
 * beyond a small epsilon.
 */

class AdamW {
  private m = new Map<tf.Variable, tf.Tensor>();
  private v = new Map<tf.Variable, tf.Tensor>();
  private step = 0;

  constructor(
    public learningRate: number,
    private weightDecay: number,
    private beta1 = 0.9,
    private beta2 = 0.999,
    private epsilon = 1e-8
  ) {}

  apply(pairs: Array<[tf.Variable, tf.Tensor]>): void {
    this.step++;
    const bias1 = 1 - Math.pow(this.beta1, this.step);
    const bias2 = 1 - Math.pow(this.beta2, this.step);
    for (const [variable, grad] of pairs) {
      const mPrev = this.m.get(variable) ?? tf.zerosLike(variable);
      const vPrev = this.v.get(variable) ?? tf.zerosLike(variable);
      const mNext = tf.add(tf.mul(mPrev, this.beta1), tf.mul(grad, 1 - this.beta1));
      const vNext = tf.add(tf.mul(vPrev, this.beta2), tf.mul(tf.square(grad), 1 - this.beta2));
      const stepSize = tf.mul(
        tf.div(tf.div(mNext, bias1), tf.add(tf.sqrt(tf.div(vNext, bias2)), this.epsilon)),
        this.learningRate
      );
      // decoupled weight decay: shrink weights directly, not through Adam
      const decay = tf.mul(variable, this.learningRate * this.weightDecay);
      const updated = tf.sub(variable, tf.add(stepSize, decay));
      variable.assign(updated as tf.Tensor<tf.Rank>);
      mPrev.dispose();
      vPrev.dispose();
      stepSize.dispose();
      decay.dispose();
      updated.dispose();
      this.m.set(variable, mNext);
      this.v.set(variable, vNext);
    }
  }

  dispose(): void {
    for (const t of this.m.values()) t.dispose();
    for (const t of this.v.values()) t.dispose();
    this.m.clear();
    this.v.clear();
  }
}

export interface EpochLog {
  epoch: number;
  totalLoss: number;
  screenLoss: number;
  severeLoss: number;
  tscoreLoss: number;
  valAuprc: number;
  valAuroc: number;
  learningRate: number;
}

export interface TrainResult {
  model: StrNet;
  stats: CovariateStats;
  log: EpochLog[];
  bestEpoch: number;
  bestValAuprc: number;
  stoppedEarly: boolean;
}

function batchTargets(batch: Sample[]): BatchTargets {
  const n = batch.length;
  const screen = new Float32Array(n);
  const severe = new Float32Array(n);
  const severeMask = new Float32Array(n);
  const tscore = new Float32Array(n);
  const tscoreMask = new Float32Array(n);
  batch.forEach((sample, i) => {
    screen[i] = sample.screenLabel;
    severe[i] = sample.severeLabel;
    severeMask[i] = sample.screenLabel;
    if (sample.tScore !== null) {
      tscore[i] = sample.tScore;
      tscoreMask[i] = 1;
    }
  });
  return {
    screenLabels: tf.tensor1d(screen),
    severeLabels: tf.tensor1d(severe),
    severeMask: tf.tensor1d(severeMask),
    tscoreTargets: tf.tensor1d(tscore),
    tscoreMask: tf.tensor1d(tscoreMask),
  };
}

function disposeTargets(targets: BatchTargets): void {
  targets.screenLabels.dispose();
  targets.severeLabels.dispose();
  targets.severeMask.dispose();
  targets.tscoreTargets.dispose();
  targets.tscoreMask.dispose();
}

/** Screening probabilities in eval mode, batched to bound memory. */
export function predictScreenProbs(
  model: StrNet,
  samples: Sample[],
  stats: CovariateStats,
  batchSize = 32
): number[] {
  const probs: number[] = [];
  for (let start = 0; start < samples.length; start += batchSize) {
    const batch = samples.slice(start, start + batchSize);
    tf.tidy(() => {
      const images = imagesToTensor(batch.map((s) => s.image), model.config.inputSize);
      const covs = tf.tensor2d(standardizeCovariates(batch, stats), [batch.length, 3]);
      const outputs = model.forward(images, covs, false);
      const logits = outputs.screenLogit.dataSync();
      for (let i = 0; i < batch.length; i++) probs.push(sigmoid(logits[i]));
    });
  }
  return probs;
}

export function trainModel(
  samples: Sample[],
  model: StrNet,
  config: Partial<TrainConfig> = {}
): TrainResult {
  const c: TrainConfig = { ...defaultTrainConfig, ...config };
  const train = samples.filter((s) => s.split === "train");
  const val = samples.filter((s) => s.split === "val");
  if (train.length === 0) throw new Error("training split is empty");
  const valLabels = val.map((s) => s.screenLabel);
  if (val.length === 0 || !valLabels.includes(0) || !valLabels.includes(1)) {
    throw new Error("validation split must be nonempty with both classes");
  }

  const stats = covariateStats(train);
  const screenWeights = classWeightsFromLabels(train.map((s) => s.screenLabel));
  const boneLoss = train.filter((s) => s.screenLabel === 1);
  let severeWeights: ClassWeights = { positive: 1, negative: 1 };
  const severeLabels = boneLoss.map((s) => s.severeLabel);
  if (severeLabels.includes(0) && severeLabels.includes(1)) {
    severeWeights = classWeightsFromLabels(severeLabels);
  }

  const optimizer = new AdamW(c.learningRate, c.weightDecay);
  const variables = model.trainableVariables();
  const byName = new Map(variables.map((v) => [v.name, v]));

  const log: EpochLog[] = [];
  let bestValAuprc = -Infinity;
  let bestEpoch = -1;
  let bestWeights: Array<{ name: string; tensor: tf.Tensor }> | null = null;
  let sinceImprovement = 0;
  let sincePlateau = 0;
  let stoppedEarly = false;

  for (let epoch = 0; epoch < c.maxEpochs; epoch++) {
    const order = derivedRng(c.seed, epoch).shuffled(train.length);
    const lossSums = { total: 0, screen: 0, severe: 0, tscore: 0 };
    let batches = 0;

    for (let start = 0; start < train.length; start += c.batchSize) {
      const batch = order.slice(start, start + c.batchSize).map((i) => train[i]);
      const images = batch.map((sample, j) =>
        c.augment
          ? augment(sample.image, derivedRng(c.seed, epoch * 1_000_003 + start + j))
          : sample.image
      );
      const imageTensor = imagesToTensor(images, model.config.inputSize);
      const covTensor = tf.tensor2d(standardizeCovariates(batch, stats), [batch.length, 3]);
      const targets = batchTargets(batch);

      const terms = { screen: 0, severe: 0, tscore: 0 };
      const { value, grads } = tf.variableGrads(() => {
        const outputs = model.forward(imageTensor, covTensor, true);
        const loss = multitaskLoss(outputs, targets, epoch, c, screenWeights, severeWeights);
        terms.screen = loss.screen.dataSync()[0];
        terms.severe = loss.severe.dataSync()[0];
        terms.tscore = loss.tscore.dataSync()[0];
        return loss.total;
      }, variables);

      // clip by global norm, then step; optimizer state must outlive the
      // batch, so no tidy scope here
      const normTensor = globalNorm(Object.values(grads));
      const norm = normTensor.dataSync()[0];
      normTensor.dispose();
      const scale = norm > c.gradClipNorm ? c.gradClipNorm / norm : 1.0;
      const scaledGrads: tf.Tensor[] = [];
      const pairs: Array<[tf.Variable, tf.Tensor]> = Object.entries(grads).map(
        ([name, grad]) => {
          if (scale === 1.0) return [byName.get(name)!, grad];
          const scaled = tf.mul(grad, scale);
          scaledGrads.push(scaled);
          return [byName.get(name)!, scaled];
        }
      );
      optimizer.apply(pairs);
      scaledGrads.forEach((t) => t.dispose());

      lossSums.total += value.dataSync()[0];
      lossSums.screen += terms.screen;
      lossSums.severe += terms.severe;
      lossSums.tscore += terms.tscore;
      batches++;

      value.dispose();
      Object.values(grads).forEach((g) => g.dispose());
      imageTensor.dispose();
      covTensor.dispose();
      disposeTargets(targets);
    }

    const valProbs = predictScreenProbs(model, val, stats, c.batchSize);
    const valAuprc = averagePrecision(valLabels, valProbs);
    const valAuroc = aurocTrapezoid(valLabels, valProbs);
    log.push({
      epoch,
      totalLoss: lossSums.total / batches,
      screenLoss: lossSums.screen / batches,
      severeLoss: lossSums.severe / batches,
      tscoreLoss: lossSums.tscore / batches,
      valAuprc,
      valAuroc,
      learningRate: optimizer.learningRate,
    });

    if (valAuprc > bestValAuprc + c.improvementEps) {
      bestValAuprc = valAuprc;
      bestEpoch = epoch;
      sinceImprovement = 0;
      sincePlateau = 0;
      if (bestWeights) bestWeights.forEach((w) => w.tensor.dispose());
      bestWeights = model.namedWeights().map(({ name, tensor }) => ({
        name,
        tensor: tensor.clone(),
      }));
    } else {
      sinceImprovement++;
      sincePlateau++;
    }

    if (sincePlateau >= c.plateauPatience) {
      optimizer.learningRate *= c.plateauFactor;
      sincePlateau = 0;
    }
    if (sinceImprovement >= c.earlyStopPatience) {
      stoppedEarly = true;
      break;
    }
  }

  if (bestWeights) {
    model.loadNamedWeights(new Map(bestWeights.map((w) => [w.name, w.tensor])));
    bestWeights.forEach((w) => w.tensor.dispose());
  }
  optimizer.dispose();
  return { model, stats, log, bestEpoch, bestValAuprc, stoppedEarly };
}

// --------------------------------------------------------------------------
// Checkpoints: JSON metadata + base64 weights, no tfjs IO handlers needed.
// --------------------------------------------------------------------------

export interface Checkpoint {
  modelConfig: ModelConfig;
  stats: CovariateStats;
  bestEpoch: number;
  bestValAuprc: number;
}

export function saveCheckpoint(filePath: string, result: TrainResult): void {
  const weights = result.model.namedWeights().map(({ name, tensor }) => {
    const data = tensor.dataSync() as Float32Array;
    return {
      name,
      shape: tensor.shape,
      data: Buffer.from(data.buffer, data.byteOffset, data.byteLength).toString("base64"),
    };
  });
  const payload = {
    modelConfig: result.model.config,
    stats: result.stats,
    bestEpoch: result.bestEpoch,
    bestValAuprc: result.bestValAuprc,
    weights,
  };
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, JSON.stringify(payload));
}

export function loadCheckpoint(filePath: string): { model: StrNet; checkpoint: Checkpoint } {
  const payload = JSON.parse(fs.readFileSync(filePath, "utf-8"));
  const model = new StrNet(payload.modelConfig);
  model.buildWeights();
  const values = new Map<string, tf.Tensor>();
  const rename = buildRenameMap(
    payload.weights.map((w: { name: string }) => w.name),
    model.namedWeights().map((w) => w.name)
  );
  for (const w of payload.weights) {
    const buffer = Buffer.from(w.data, "base64");
    const array = new Float32Array(buffer.buffer, buffer.byteOffset, buffer.byteLength / 4);
    values.set(rename.get(w.name)!, tf.tensor(Array.from(array), w.shape));
  }
  model.loadNamedWeights(values);
  for (const t of values.values()) t.dispose();
  return {
    model,
    checkpoint: {
      modelConfig: payload.modelConfig,
      stats: payload.stats,
      bestEpoch: payload.bestEpoch,
      bestValAuprc: payload.bestValAuprc,
    },
  };
}

/**
 * Weight names carry a per-process instance prefix; positional pairing
 * maps saved names onto the freshly built model's names.
 */
function buildRenameMap(saved: string[], fresh: string[]): Map<string, string> {
  if (saved.length !== fresh.length) {
    throw new Error(
      `checkpoint has ${saved.length} weights but the model expects ${fresh.length}`
    );
  }
  return new Map(saved.map((name, i) => [name, fresh[i]]));
}

export function writeTrainingLog(filePath: string, log: EpochLog[]): void {
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, log.map((entry) => JSON.stringify(entry)).join("\n") + "\n");
}
