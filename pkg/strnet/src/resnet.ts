import * as tf from "@tensorflow/tfjs";

/**
 * Backbones producing a spatial feature map from a single-channel image.
 *
 * `resnet50` is the standard 4-stage bottleneck network ([3,4,6,3] blocks,
 * bias-free convolutions, batch norm everywhere) with the first
 * convolution taking one input channel. `tiny` is a three-conv stand-in
 * with the same interface, used where full-scale compute is pointless
 * (unit tests, toy convergence runs).
 */

export interface Backbone {
  /** Image batch [n, s, s, 1] -> feature map [n, h, w, outChannels]. */
  apply(x: tf.Tensor4D, training: boolean): tf.Tensor4D;
  outChannels: number;
  layers: tf.layers.Layer[];
  firstConv: tf.layers.Layer;
}

class SeedStream {
  constructor(private seed: number) {}
  next(): number {
    this.seed = (this.seed * 1103515245 + 12345) % 2147483647;
    return this.seed;
  }
}

function conv(
  name: string,
  filters: number,
  kernel: number,
  stride: number,
  seeds: SeedStream
): tf.layers.Layer {
  return tf.layers.conv2d({
    name,
    filters,
    kernelSize: kernel,
    strides: stride,
    padding: "same",
    useBias: false,
    kernelInitializer: tf.initializers.heNormal({ seed: seeds.next() }),
  });
}

function batchNorm(name: string): tf.layers.Layer {
  return tf.layers.batchNormalization({ name });
}

class Bottleneck {
  readonly layers: tf.layers.Layer[] = [];
  private conv1: tf.layers.Layer;
  private bn1: tf.layers.Layer;
  private conv2: tf.layers.Layer;
  private bn2: tf.layers.Layer;
  private conv3: tf.layers.Layer;
  private bn3: tf.layers.Layer;
  private projection: tf.layers.Layer | null = null;
  private projectionBn: tf.layers.Layer | null = null;

  constructor(
    name: string,
    inChannels: number,
    width: number,
    stride: number,
    seeds: SeedStream
  ) {
    const out = width * 4;
    this.conv1 = conv(`${name}_conv1`, width, 1, 1, seeds);
    this.bn1 = batchNorm(`${name}_bn1`);
    this.conv2 = conv(`${name}_conv2`, width, 3, stride, seeds);
    this.bn2 = batchNorm(`${name}_bn2`);
    this.conv3 = conv(`${name}_conv3`, out, 1, 1, seeds);
    this.bn3 = batchNorm(`${name}_bn3`);
    if (stride !== 1 || inChannels !== out) {
      this.projection = conv(`${name}_proj`, out, 1, stride, seeds);
      this.projectionBn = batchNorm(`${name}_proj_bn`);
    }
    this.layers.push(this.conv1, this.bn1, this.conv2, this.bn2, this.conv3, this.bn3);
    if (this.projection) this.layers.push(this.projection, this.projectionBn!);
  }

  apply(x: tf.Tensor4D, training: boolean): tf.Tensor4D {
    const kwargs = { training };
    let out = tf.relu(this.bn1.apply(this.conv1.apply(x), kwargs) as tf.Tensor4D);
    out = tf.relu(this.bn2.apply(this.conv2.apply(out), kwargs) as tf.Tensor4D);
    out = this.bn3.apply(this.conv3.apply(out), kwargs) as tf.Tensor4D;
    const skip = this.projection
      ? (this.projectionBn!.apply(this.projection.apply(x), kwargs) as tf.Tensor4D)
      : x;
    return tf.relu(tf.add(out, skip)) as tf.Tensor4D;
  }
}

const STAGE_BLOCKS = [3, 4, 6, 3];
const STAGE_WIDTHS = [64, 128, 256, 512];

export function buildResNet50(seed: number, prefix = ""): Backbone {
  const seeds = new SeedStream(seed);
  const stem = conv(`${prefix}bb_conv1`, 64, 7, 2, seeds);
  const stemBn = batchNorm(`${prefix}bb_bn1`);
  const pool = tf.layers.maxPooling2d({
    name: `${prefix}bb_pool1`,
    poolSize: 3,
    strides: 2,
    padding: "same",
  });

  const blocks: Bottleneck[] = [];
  let inChannels = 64;
  STAGE_BLOCKS.forEach((count, stage) => {
    const width = STAGE_WIDTHS[stage];
    for (let b = 0; b < count; b++) {
      const stride = b === 0 && stage > 0 ? 2 : 1;
      blocks.push(
        new Bottleneck(`${prefix}bb_s${stage + 2}_b${b}`, inChannels, width, stride, seeds)
      );
      inChannels = width * 4;
    }
  });

  const layers = [stem, stemBn, pool, ...blocks.flatMap((b) => b.layers)];
  return {
    outChannels: 2048,
    layers,
    firstConv: stem,
    apply(x: tf.Tensor4D, training: boolean): tf.Tensor4D {
      const kwargs = { training };
      let out = tf.relu(stemBn.apply(stem.apply(x), kwargs) as tf.Tensor4D);
      out = pool.apply(out) as tf.Tensor4D;
      for (const block of blocks) out = block.apply(out, training);
      return out;
    },
  };
}

export function buildTinyBackbone(channels: number[], seed: number, prefix = ""): Backbone {
  const seeds = new SeedStream(seed);
  const convs = channels.map((c, i) => conv(`${prefix}bb_tiny_conv${i}`, c, 3, 2, seeds));
  const bns = channels.map((_, i) => batchNorm(`${prefix}bb_tiny_bn${i}`));
  const layers: tf.layers.Layer[] = [];
  convs.forEach((c, i) => layers.push(c, bns[i]));
  return {
    outChannels: channels[channels.length - 1],
    layers,
    firstConv: convs[0],
    apply(x: tf.Tensor4D, training: boolean): tf.Tensor4D {
      const kwargs = { training };
      let out = x;
      for (let i = 0; i < convs.length; i++) {
        out = tf.relu(bns[i].apply(convs[i].apply(out), kwargs) as tf.Tensor4D);
      }
      return out;
    },
  };
}

/**
 * Collapse pretrained 3-channel first-layer weights to one channel by
 * averaging the input-channel slices. Kernel layout is [kh, kw, in, out].
 */
export function adaptFirstConv(weights: tf.Tensor4D): tf.Tensor4D {
  if (weights.rank !== 4 || weights.shape[2] !== 3) {
    throw new Error(
      `expected [kh, kw, 3, out] first-conv weights, got shape [${weights.shape}]`
    );
  }
  return tf.mean(weights, 2, true) as tf.Tensor4D;
}
