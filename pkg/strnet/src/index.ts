export {
  AugmentConfig,
  BackboneKind,
  ModelConfig,
  PIXEL_MEAN,
  PIXEL_STD,
  TrainConfig,
  defaultAugmentConfig,
  defaultModelConfig,
  defaultTrainConfig,
} from "./config";
export { GrayImage, affine, augment, borderMask, hflip, medianValue } from "./augment";
export {
  CovariateStats,
  ManifestRecord,
  Sample,
  covariateStats,
  imagesToTensor,
  loadSamples,
  makeToyDataset,
  parseManifest,
  readManifest,
  readPngGray,
  sampleFromRecord,
  standardizeCovariates,
  writePngGray,
} from "./data";
export { ForwardOutputs, StrNet } from "./model";
export { Backbone, adaptFirstConv, buildResNet50, buildTinyBackbone } from "./resnet";
export {
  BatchTargets,
  ClassWeights,
  LossBreakdown,
  classWeightsFromLabels,
  multitaskLoss,
} from "./loss";
export { averagePrecision, aurocTrapezoid, sigmoid } from "./metrics";
export { bceWithLogits, globalNorm, smoothL1, stopGradient } from "./ops";
export {
  CamHead,
  camFromActivations,
  gradCam,
  jetColor,
  upsampleCam,
  writeOverlayPng,
} from "./gradcam";
export {
  Checkpoint,
  EpochLog,
  TrainResult,
  loadCheckpoint,
  predictScreenProbs,
  saveCheckpoint,
  trainModel,
  writeTrainingLog,
} from "./train";
export { ScoreRowOut, scoreRows, writeScoreTable } from "./export";
export { Rng, derivedRng } from "./rng";
