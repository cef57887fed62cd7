import * as fs from "fs";
import * as path from "path";

import * as tf from "@tensorflow/tfjs";

import { CovariateStats, Sample, imagesToTensor, standardizeCovariates } from "./data";
import { sigmoid } from "./metrics";
import { StrNet } from "./model";

/**
 * Score-table export: one row per sample in the evaluation toolkit's
 * schema. severe_prob is emitted only for Bone-Loss rows; tscore_pred is
 * always emitted; tscore_ref passes through when the manifest carried a
 * reference T-score.
 */

const SCORE_HEADER =
  "sample_id,split,label_class,screen_prob,severe_prob,tscore_pred,tscore_ref";

export interface ScoreRowOut {
  sampleId: string;
  split: string;
  labelClass: number;
  screenProb: number;
  severeProb: number | null;
  tscorePred: number;
  tscoreRef: number | null;
}

export function scoreRows(
  model: StrNet,
  samples: Sample[],
  stats: CovariateStats,
  batchSize = 32
): ScoreRowOut[] {
  const rows: ScoreRowOut[] = [];
  for (let start = 0; start < samples.length; start += batchSize) {
    const batch = samples.slice(start, start + batchSize);
    tf.tidy(() => {
      const images = imagesToTensor(batch.map((s) => s.image), model.config.inputSize);
      const covs = tf.tensor2d(standardizeCovariates(batch, stats), [batch.length, 3]);
      const outputs = model.forward(images, covs, false);
      const screen = outputs.screenLogit.dataSync();
      const severe = outputs.severeLogit ? outputs.severeLogit.dataSync() : null;
      const tscore = outputs.tscorePred ? outputs.tscorePred.dataSync() : null;
      batch.forEach((sample, i) => {
        const labelClass = sample.screenLabel === 0 ? 0 : sample.severeLabel === 1 ? 2 : 1;
        rows.push({
          sampleId: sample.sampleId,
          split: sample.split,
          labelClass,
          screenProb: sigmoid(screen[i]),
          severeProb:
            severe !== null && labelClass > 0 ? sigmoid(severe[i]) : null,
          tscorePred: tscore !== null ? tscore[i] : 0,
          tscoreRef: sample.tScore,
        });
      });
    });
  }
  return rows;
}

export function writeScoreTable(rows: ScoreRowOut[], filePath: string): void {
  const lines = [SCORE_HEADER];
  for (const row of rows) {
    lines.push(
      [
        row.sampleId,
        row.split,
        row.labelClass,
        row.screenProb,
        row.severeProb === null ? "" : row.severeProb,
        row.tscorePred,
        row.tscoreRef === null ? "" : row.tscoreRef,
      ].join(",")
    );
  }
  fs.mkdirSync(path.dirname(filePath), { recursive: true });
  fs.writeFileSync(filePath, lines.join("\n") + "\n");
}
