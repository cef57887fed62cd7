import * as tf from "@tensorflow/tfjs";

import { ModelConfig, defaultModelConfig } from "./config";
import { TaskScale, stopGradient } from "./ops";
import { Backbone, buildResNet50, buildTinyBackbone } from "./resnet";

/**
 * STR-Net: shared backbone and neck, task-aware representation routing
 * (per-task learnable scale followed by a bottlenecked projection), and
 * three heads. The T-score branch is weakly coupled: a gradient barrier
 * sits between its task embedding and the image adapter, so its loss can
 * never push gradients into shared layers. Clinical covariates
 * (standardized age/sex/BMI, zeros when absent) join through a tabular
 * encoder and a fusion MLP.
 */

export interface ForwardOutputs {
  screenLogit: tf.Tensor;
  severeLogit: tf.Tensor | null;
  tscorePred: tf.Tensor | null;
}

interface TarrBranch {
  scale: TaskScale;
  hidden: tf.layers.Layer;
  norm: tf.layers.Layer;
  dropout: tf.layers.Layer;
  out: tf.layers.Layer;
}

const TASKS = ["screen", "severe", "tscore"] as const;
type Task = (typeof TASKS)[number];

export class StrNet {
  private static nextUid = 0;
  /** Per-instance layer-name prefix; keeps variable names process-unique. */
  readonly prefix: string;
  readonly config: ModelConfig;
  readonly backbone: Backbone;
  private neckDense: tf.layers.Layer | null = null;
  private neckDropout: tf.layers.Layer | null = null;
  private tarr = new Map<Task, TarrBranch>();
  private screenHead: tf.layers.Layer;
  private severeHead: tf.layers.Layer | null = null;
  private imageAdapter: tf.layers.Layer | null = null;
  private tabularLayers: tf.layers.Layer[] = [];
  private fusionLayers: tf.layers.Layer[] = [];
  /** Every layer in construction order (checkpointing, enumeration). */
  readonly allLayers: tf.layers.Layer[] = [];

  constructor(config: Partial<ModelConfig> = {}) {
    this.prefix = `m${StrNet.nextUid++}_`;
    this.config = { ...defaultModelConfig, ...config };
    const c = this.config;
    let seed = c.seed;
    const nextSeed = () => ++seed;

    this.backbone =
      c.backbone === "resnet50"
        ? buildResNet50(nextSeed(), this.prefix)
        : buildTinyBackbone(c.tinyChannels, nextSeed(), this.prefix);
    this.allLayers.push(...this.backbone.layers);

    const dense = (name: string, units: number) =>
      tf.layers.dense({
        name: this.prefix + name,
        units,
        kernelInitializer: tf.initializers.glorotUniform({ seed: nextSeed() }),
      });

    if (c.useNeck) {
      this.neckDense = dense("neck_dense", c.neckDim);
      this.neckDropout = tf.layers.dropout({
        name: this.prefix + "neck_dropout",
        rate: c.neckDropout,
        seed: nextSeed(),
      });
      this.allLayers.push(this.neckDense, this.neckDropout);
    }

    const sharedDim = c.useNeck ? c.neckDim : this.backbone.outChannels;

    if (c.useTarr) {
      for (const task of TASKS) {
        if (task === "severe" && !c.useSevereHead) continue;
        if (task === "tscore" && !c.useTscoreBranch) continue;
        const branch: TarrBranch = {
          scale: new TaskScale(sharedDim, `${this.prefix}tarr_${task}_scale`),
          hidden: dense(`tarr_${task}_hidden`, c.tarrHidden),
          norm: tf.layers.batchNormalization({ name: `${this.prefix}tarr_${task}_bn` }),
          dropout: tf.layers.dropout({
            name: `${this.prefix}tarr_${task}_dropout`,
            rate: c.neckDropout,
            seed: nextSeed(),
          }),
          out: dense(`tarr_${task}_out`, c.tarrOut),
        };
        this.tarr.set(task, branch);
        this.allLayers.push(branch.scale, branch.hidden, branch.norm, branch.dropout, branch.out);
      }
    }

    this.screenHead = dense("head_screen", 1);
    this.allLayers.push(this.screenHead);
    if (c.useSevereHead) {
      this.severeHead = dense("head_severe", 1);
      this.allLayers.push(this.severeHead);
    }
    if (c.useTscoreBranch) {
      this.imageAdapter = dense("tscore_adapter", c.tscoreImageAdapterDim);
      this.tabularLayers = [
        dense("tscore_tab1", c.tabularHidden),
        dense("tscore_tab2", c.tabularOut),
      ];
      this.fusionLayers = [dense("tscore_fusion1", c.fusionHidden), dense("tscore_fusion2", 1)];
      this.allLayers.push(this.imageAdapter, ...this.tabularLayers, ...this.fusionLayers);
    }
  }

  /** Backbone feature map (the Grad-CAM tap point). */
  features(images: tf.Tensor4D, training = false): tf.Tensor4D {
    return this.backbone.apply(images, training);
  }

  private sharedEmbedding(features: tf.Tensor4D, training: boolean): tf.Tensor {
    let pooled: tf.Tensor = tf.mean(features, [1, 2]);
    if (this.neckDense) {
      pooled = tf.relu(this.neckDense.apply(pooled) as tf.Tensor);
      pooled = this.neckDropout!.apply(pooled, { training }) as tf.Tensor;
    }
    return pooled;
  }

  private taskEmbedding(shared: tf.Tensor, task: Task, training: boolean): tf.Tensor {
    const branch = this.tarr.get(task);
    if (!branch) return shared;
    let x = branch.scale.apply(shared) as tf.Tensor;
    x = branch.hidden.apply(x) as tf.Tensor;
    x = branch.norm.apply(x, { training }) as tf.Tensor;
    x = tf.relu(x);
    x = branch.dropout.apply(x, { training }) as tf.Tensor;
    return branch.out.apply(x) as tf.Tensor;
  }

  /**
   * Heads from a precomputed feature map. Covariates are a standardized
   * [n, 3] tensor; pass null when unknown (imputed-mean rows are zeros).
   */
  headsFromFeatures(
    features: tf.Tensor4D,
    covariates: tf.Tensor2D | null,
    training = false
  ): ForwardOutputs {
    const n = features.shape[0];
    const shared = this.sharedEmbedding(features, training);

    const screenLogit = tf.reshape(
      this.screenHead.apply(this.taskEmbedding(shared, "screen", training)) as tf.Tensor,
      [n]
    );

    let severeLogit: tf.Tensor | null = null;
    if (this.severeHead) {
      severeLogit = tf.reshape(
        this.severeHead.apply(this.taskEmbedding(shared, "severe", training)) as tf.Tensor,
        [n]
      );
    }

    let tscorePred: tf.Tensor | null = null;
    if (this.imageAdapter) {
      // gradient barrier: the T-score loss must not reach shared layers
      const embedding = stopGradient(this.taskEmbedding(shared, "tscore", training));
      const imagePart = tf.relu(this.imageAdapter.apply(embedding) as tf.Tensor);
      const covs = covariates ?? (tf.zeros([n, 3]) as tf.Tensor2D);
      let tab: tf.Tensor = covs;
      for (const layer of this.tabularLayers) {
        tab = tf.relu(layer.apply(tab) as tf.Tensor);
      }
      let fused = tf.concat([imagePart, tab], 1);
      fused = tf.relu(this.fusionLayers[0].apply(fused) as tf.Tensor);
      tscorePred = tf.reshape(this.fusionLayers[1].apply(fused) as tf.Tensor, [n]);
    }

    return { screenLogit, severeLogit, tscorePred };
  }

  forward(
    images: tf.Tensor4D,
    covariates: tf.Tensor2D | null = null,
    training = false
  ): ForwardOutputs {
    if (images.shape[1] !== this.config.inputSize || images.shape[2] !== this.config.inputSize) {
      throw new Error(
        `expected ${this.config.inputSize}x${this.config.inputSize} input, ` +
          `got ${images.shape[1]}x${images.shape[2]}`
      );
    }
    const outputs = this.headsFromFeatures(
      this.features(images, training),
      covariates,
      training
    );
    this.weightsBuilt = true;
    return outputs;
  }

  private weightsBuilt = false;

  /** Materialize all lazily created layer weights with one probe pass. */
  buildWeights(): void {
    if (this.weightsBuilt) return;
    tf.tidy(() => {
      const probe = tf.zeros([
        1,
        this.config.inputSize,
        this.config.inputSize,
        1,
      ]) as tf.Tensor4D;
      const covs = tf.zeros([1, 3]) as tf.Tensor2D;
      this.headsFromFeatures(this.features(probe, false), covs, false);
    });
    this.weightsBuilt = true;
  }

  trainableVariables(section?: string): tf.Variable[] {
    this.buildWeights();
    const vars: tf.Variable[] = [];
    for (const layer of this.allLayers) {
      for (const weight of layer.trainableWeights) {
        if (section && !weight.name.startsWith(this.prefix + section)) continue;
        vars.push((weight as unknown as { val: tf.Variable }).val);
      }
    }
    return vars;
  }

  /** Shared-trunk variables: the ones the gradient barrier protects. */
  trunkVariables(): tf.Variable[] {
    return [
      ...this.trainableVariables("bb_"),
      ...this.trainableVariables("neck_"),
    ];
  }

  countTrainableParams(): number {
    this.buildWeights();
    return this.allLayers.reduce(
      (sum, layer) =>
        sum +
        layer.trainableWeights.reduce(
          (s, w) => s + (w.shape as number[]).reduce((a, b) => a * b, 1),
          0
        ),
      0
    );
  }

  /** Ordered (name, tensor) weight snapshot for checkpointing. */
  namedWeights(): Array<{ name: string; tensor: tf.Tensor }> {
    this.buildWeights();
    const out: Array<{ name: string; tensor: tf.Tensor }> = [];
    for (const layer of this.allLayers) {
      for (const weight of layer.weights) {
        out.push({ name: weight.name, tensor: weight.read() });
      }
    }
    return out;
  }

  loadNamedWeights(values: Map<string, tf.Tensor>): void {
    this.buildWeights();
    for (const layer of this.allLayers) {
      for (const weight of layer.weights) {
        const tensor = values.get(weight.name);
        if (!tensor) throw new Error(`checkpoint is missing weight ${weight.name}`);
        weight.write(tensor);
      }
    }
  }
}
