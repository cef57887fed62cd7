/** Model, trainer, and augmentation configuration with pinned defaults. */

export type BackboneKind = "resnet50" | "tiny";

export interface ModelConfig {
  backbone: BackboneKind;
  inputSize: number;
  neckDim: number;
  neckDropout: number;
  tarrHidden: number;
  tarrOut: number;
  tscoreImageAdapterDim: number;
  tabularHidden: number;
  tabularOut: number;
  fusionHidden: number;
  /** Ablation flags; all on reproduces the full architecture. */
  useNeck: boolean;
  useSevereHead: boolean;
  useTscoreBranch: boolean;
  useTarr: boolean;
  /** Channel widths of the reduced test backbone. */
  tinyChannels: number[];
  seed: number;
}

export const defaultModelConfig: ModelConfig = {
  backbone: "resnet50",
  inputSize: 512,
  neckDim: 128,
  neckDropout: 0.3,
  tarrHidden: 64,
  tarrOut: 128,
  tscoreImageAdapterDim: 64,
  tabularHidden: 32,
  tabularOut: 32,
  fusionHidden: 64,
  useNeck: true,
  useSevereHead: true,
  useTscoreBranch: true,
  useTarr: true,
  tinyChannels: [8, 16, 32],
  seed: 42,
};

export interface TrainConfig {
  lambdaSevere: number;
  lambdaTscore: number;
  tscoreWarmupEpochs: number;
  maxEpochs: number;
  earlyStopPatience: number;
  batchSize: number;
  learningRate: number;
  weightDecay: number;
  plateauFactor: number;
  plateauPatience: number;
  gradClipNorm: number;
  seed: number;
  /** Minimal increase of validation AUPRC that counts as improvement. */
  improvementEps: number;
  augment: boolean;
}

export const defaultTrainConfig: TrainConfig = {
  lambdaSevere: 0.3,
  lambdaTscore: 0.1,
  tscoreWarmupEpochs: 5,
  maxEpochs: 100,
  earlyStopPatience: 30,
  batchSize: 32,
  learningRate: 1e-4,
  weightDecay: 1e-4,
  plateauFactor: 0.5,
  plateauPatience: 20,
  gradClipNorm: 1.0,
  seed: 42,
  improvementEps: 1e-6,
  augment: true,
};

export interface AugmentConfig {
  hflipP: number;
  maxRotationDeg: number;
  maxTranslation: number;
  scaleLo: number;
  scaleHi: number;
  borderMaskP: number;
  borderMaskMax: number;
}

export const defaultAugmentConfig: AugmentConfig = {
  hflipP: 0.5,
  maxRotationDeg: 8,
  maxTranslation: 0.04,
  scaleLo: 0.95,
  scaleHi: 1.05,
  borderMaskP: 0.5,
  borderMaskMax: 0.04,
};

/** Tensor normalization applied after augmentation: (v/255 - mean) / std. */
export const PIXEL_MEAN = 0.5;
export const PIXEL_STD = 0.25;
