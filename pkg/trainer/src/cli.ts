/**
 * Command-line entry point for the trainer.
 *
 *   train   fit a param-conv model on a KFBID1 dataset, write KFBIW1 weights
 *   golden  run the float64 reference forward pass on sample records and
 *           store (params, g, model output) triples as a KFBID1 file
 *   eval    report relative RMS of the stored weights on a dataset
 */

import process from "node:process";
import yargs from "yargs";
import { hideBin } from "yargs/helpers";

import { readDataset, writeDataset, type Dataset } from "./dataset.js";
import { forward } from "./forward.js";
import { readWeights, writeWeights } from "./weights.js";

async function cmdTrain(args: {
  data: string;
  out: string;
  steps: number;
  batch: number;
  lr: number;
  seed: number;
}): Promise<void> {
  const { train } = await import("./train.js");
  const ds = readDataset(args.data);
  const result = await train(ds, {
    steps: args.steps,
    batchSize: args.batch,
    learningRate: args.lr,
    seed: args.seed,
  });
  writeWeights(args.out, result.cfg, result.tensors);
  console.log(
    `done after ${result.steps} steps: ` +
      `exact_code_rel_rms=${result.exactCodeRelRms.toExponential(3)} ` +
      `code_val_mse=${result.codeValMse.toExponential(4)} ` +
      `dataset_rel_rms=${result.datasetRelRms.toExponential(3)}`,
  );
  console.log(`weights written to ${args.out}`);
}

function goldenRecords(ds: Dataset, count: number, seed: number): number[] {
  // spread picks across the file deterministically
  const picks: number[] = [];
  let state = (seed >>> 0) || 1;
  for (let i = 0; i < count; i++) {
    state = (state * 1103515245 + 12345) >>> 0;
    picks.push(state % ds.count);
  }
  return picks;
}

function cmdGolden(args: { weights: string; data: string; out: string; count: number; seed: number }): void {
  const { cfg, tensors } = readWeights(args.weights);
  const ds = readDataset(args.data);
  if (ds.m !== cfg.m || ds.nParams !== cfg.nParams) {
    throw new Error("dataset and weights disagree on sizes");
  }
  const picks = goldenRecords(ds, args.count, args.seed);
  const params = new Float64Array(picks.length * cfg.nParams);
  const g = new Float64Array(picks.length * cfg.m);
  const phi = new Float64Array(picks.length * cfg.m);
  picks.forEach((rec, row) => {
    const p = ds.params.subarray(rec * cfg.nParams, (rec + 1) * cfg.nParams);
    const gi = ds.g.subarray(rec * cfg.m, (rec + 1) * cfg.m);
    params.set(p, row * cfg.nParams);
    g.set(gi, row * cfg.m);
    phi.set(forward(cfg, tensors, Float64Array.from(gi), Float64Array.from(p)), row * cfg.m);
  });
  writeDataset(args.out, {
    m: cfg.m,
    nParams: cfg.nParams,
    paramNames: ds.paramNames,
    count: picks.length,
    params,
    g,
    phi,
  });
  console.log(`${picks.length} golden records written to ${args.out}`);
}

function cmdEval(args: { weights: string; data: string }): void {
  const { cfg, tensors } = readWeights(args.weights);
  const ds = readDataset(args.data);
  let err = 0;
  let ref = 0;
  for (let i = 0; i < ds.count; i++) {
    const p = Float64Array.from(ds.params.subarray(i * cfg.nParams, (i + 1) * cfg.nParams));
    const gi = Float64Array.from(ds.g.subarray(i * cfg.m, (i + 1) * cfg.m));
    const pred = forward(cfg, tensors, gi, p);
    for (let j = 0; j < cfg.m; j++) {
      const truth = ds.phi[i * cfg.m + j];
      err += (pred[j] - truth) ** 2;
      ref += truth ** 2;
    }
  }
  console.log(`rel_rms=${Math.sqrt(err / ref).toExponential(4)} over ${ds.count} records`);
}

async function main(): Promise<void> {
  await yargs(hideBin(process.argv))
    .command(
      "train",
      "train a param-conv model on a KFBID1 dataset",
      (y) =>
        y
          .option("data", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("steps", { type: "number", default: 2000 })
          .option("batch", { type: "number", default: 64 })
          .option("lr", { type: "number", default: 1e-3 })
          .option("seed", { type: "number", default: 12345 }),
      (a) =>
        cmdTrain({
          data: a.data,
          out: a.out,
          steps: a.steps,
          batch: a.batch,
          lr: a.lr,
          seed: a.seed,
        }),
    )
    .command(
      "golden",
      "write reference forward-pass outputs for cross-implementation checks",
      (y) =>
        y
          .option("weights", { type: "string", demandOption: true })
          .option("data", { type: "string", demandOption: true })
          .option("out", { type: "string", demandOption: true })
          .option("count", { type: "number", default: 10 })
          .option("seed", { type: "number", default: 7 }),
      (a) =>
        cmdGolden({ weights: a.weights, data: a.data, out: a.out, count: a.count, seed: a.seed }),
    )
    .command(
      "eval",
      "report relative RMS of stored weights on a dataset",
      (y) =>
        y
          .option("weights", { type: "string", demandOption: true })
          .option("data", { type: "string", demandOption: true }),
      (a) => cmdEval({ weights: a.weights, data: a.data }),
    )
    .demandCommand(1)
    .strict()
    .parseAsync();
}

main().catch((err) => {
  console.error(err instanceof Error ? err.message : err);
  process.exit(1);
});
