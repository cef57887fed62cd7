import * as fs from "fs";
import * as path from "path";

import { ModelConfig, TrainConfig } from "./config";
import { loadSamples, readManifest, readPngGray } from "./data";
import { CamHead, gradCam, writeOverlayPng } from "./gradcam";
import { StrNet } from "./model";
import {
  loadCheckpoint,
  saveCheckpoint,
  trainModel,
  writeTrainingLog,
} from "./train";
import { scoreRows, writeScoreTable } from "./export";

/**
 * strnet train --manifest m.csv --images dir --out outdir [--config cfg.json]
 * strnet export-scores --ckpt ckpt.json --manifest m.csv --images dir --split test --out scores.csv
 * strnet grad-cam --ckpt ckpt.json --image img.png --head screen --out overlay.png
 *
 * The optional config file is JSON: {"model": {...}, "train": {...}}
 * overriding individual defaults.
 */

function parseArgs(argv: string[]): Map<string, string> {
  const args = new Map<string, string>();
  for (let i = 0; i < argv.length; i += 2) {
    if (!argv[i].startsWith("--") || i + 1 >= argv.length) {
      throw new Error(`expected --flag value pairs, got "${argv[i]}"`);
    }
    args.set(argv[i].slice(2), argv[i + 1]);
  }
  return args;
}

function required(args: Map<string, string>, name: string): string {
  const value = args.get(name);
  if (value === undefined) throw new Error(`missing required flag --${name}`);
  return value;
}

interface FileConfig {
  model?: Partial<ModelConfig>;
  train?: Partial<TrainConfig>;
}

function readConfig(filePath: string | undefined): FileConfig {
  if (!filePath) return {};
  return JSON.parse(fs.readFileSync(filePath, "utf-8"));
}

function cmdTrain(argv: string[]): number {
  const args = parseArgs(argv);
  const manifest = readManifest(required(args, "manifest"));
  const imagesDir = required(args, "images");
  const outDir = required(args, "out");
  const config = readConfig(args.get("config"));

  const { samples, skipped } = loadSamples(manifest, imagesDir);
  for (const line of skipped) console.error(`warning: skipped ${line}`);
  const trainable = samples.filter((s) => s.split === "train" || s.split === "val");

  const model = new StrNet(config.model ?? {});
  const result = trainModel(trainable, model, config.train ?? {});

  fs.mkdirSync(outDir, { recursive: true });
  saveCheckpoint(path.join(outDir, "best_checkpoint.json"), result);
  writeTrainingLog(path.join(outDir, "training_log.jsonl"), result.log);
  console.log(
    JSON.stringify({
      epochs_run: result.log.length,
      best_epoch: result.bestEpoch,
      best_val_auprc: result.bestValAuprc,
      stopped_early: result.stoppedEarly,
      checkpoint: path.join(outDir, "best_checkpoint.json"),
    })
  );
  return 0;
}

function cmdExportScores(argv: string[]): number {
  const args = parseArgs(argv);
  const { model, checkpoint } = loadCheckpoint(required(args, "ckpt"));
  const manifest = readManifest(required(args, "manifest"));
  const imagesDir = required(args, "images");
  const split = required(args, "split");
  const outPath = required(args, "out");

  const records = manifest.filter((r) => r.split === split);
  if (records.length === 0) throw new Error(`no manifest rows in split "${split}"`);
  const { samples, skipped } = loadSamples(records, imagesDir);
  for (const line of skipped) console.error(`warning: skipped ${line}`);

  const rows = scoreRows(model, samples, checkpoint.stats);
  writeScoreTable(rows, outPath);
  console.log(
    JSON.stringify({ rows: rows.length, skipped: skipped.length, out: outPath })
  );
  return skipped.length > 0 ? 1 : 0;
}

function cmdGradCam(argv: string[]): number {
  const args = parseArgs(argv);
  const { model } = loadCheckpoint(required(args, "ckpt"));
  const image = readPngGray(required(args, "image"));
  const head = (args.get("head") ?? "screen") as CamHead;
  const outPath = required(args, "out");
  if (image.width !== model.config.inputSize || image.height !== model.config.inputSize) {
    throw new Error(
      `image must be ${model.config.inputSize}x${model.config.inputSize} (preprocess it first)`
    );
  }
  const cam = gradCam(model, image, head);
  writeOverlayPng(outPath, image, cam);
  console.log(JSON.stringify({ head, out: outPath }));
  return 0;
}

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  try {
    if (command === "train") return cmdTrain(rest);
    if (command === "export-scores") return cmdExportScores(rest);
    if (command === "grad-cam") return cmdGradCam(rest);
    console.error("usage: strnet <train|export-scores|grad-cam> --flag value ...");
    return 2;
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
