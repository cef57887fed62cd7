import * as tf from "@tensorflow/tfjs";

/**
 * Identity in the forward pass, zero in the backward pass. Used to keep
 * the T-score branch from pushing gradients into the shared trunk.
 */
export function stopGradient<T extends tf.Tensor>(x: T): T {
  const barrier = tf.customGrad((...args: unknown[]) => {
    const input = args[0] as tf.Tensor;
    const save = args[1] as tf.GradSaveFunc;
    save([]);
    return {
      value: input.clone(),
      gradFunc: (dy: tf.Tensor) => [tf.zerosLike(dy)],
    };
  });
  return barrier(x as tf.Tensor) as T;
}

/** Learnable elementwise scale on an embedding, initialized to ones. */
export class TaskScale extends tf.layers.Layer {
  static className = "TaskScale";
  private scale: tf.LayerVariable | null = null;

  constructor(private dim: number, name: string) {
    super({ name });
  }

  build(): void {
    this.scale = this.addWeight(
      "scale",
      [this.dim],
      "float32",
      tf.initializers.ones()
    );
    this.built = true;
  }

  call(inputs: tf.Tensor | tf.Tensor[]): tf.Tensor {
    const x = Array.isArray(inputs) ? inputs[0] : inputs;
    return tf.mul(x, this.scale!.read());
  }

  computeOutputShape(inputShape: tf.Shape): tf.Shape {
    return inputShape;
  }
}
tf.serialization.registerClass(TaskScale);

/** Numerically stable sigmoid-cross-entropy from logits. */
export function bceWithLogits(logits: tf.Tensor, labels: tf.Tensor): tf.Tensor {
  // max(z,0) - z*y + log(1 + exp(-|z|))
  const relu = tf.relu(logits);
  const abs = tf.abs(logits);
  return tf.add(
    tf.sub(relu, tf.mul(logits, labels)),
    tf.log1p(tf.exp(tf.neg(abs)))
  );
}

/** Smooth-L1 (Huber with delta 1): 0.5 d^2 for |d|<1, |d|-0.5 otherwise. */
export function smoothL1(pred: tf.Tensor, target: tf.Tensor): tf.Tensor {
  // branch-free form q*(|d| - q/2) with q = min(|d|, 1); comparison ops
  // have no registered gradients in this runtime
  const diff = tf.abs(tf.sub(pred, target));
  const q = tf.minimum(diff, 1);
  return tf.mul(q, tf.sub(diff, tf.mul(0.5, q)));
}

/** Global L2 norm of a set of tensors. */
export function globalNorm(tensors: tf.Tensor[]): tf.Tensor {
  const squares = tensors.map((t) => tf.sum(tf.square(t)));
  return tf.sqrt(tf.addN(squares));
}
