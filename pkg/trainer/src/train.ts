/**
 * Trainer for the parameterized operator model.
 *
 * Stage 1 (float64, closed form): fit the linear branch — shared `lin`
 * and `head` tensors packed with per-class reduced-rank operator
 * factors — directly from the dataset (see construct.ts).
 *
 * Stage 2 (tfjs, Adam): train the nonlinear parameter branch to emit
 * the modulation codes that select and blend those factors.  The code
 * targets are known in closed form for any parameter vector, so the
 * regression set is sampled densely and never touches the PDE data.
 *
 * Stage 3 (float64, closed form): with the trained convolutional
 * features frozen, re-solve the final dense readout of the parameter
 * branch by ridge regression in float64.  This removes the float32
 * noise floor of the gradient phase from the exported weights.
 *
 * The exported weights combine the float64 linear branch with the
 * trained parameter branch; the parameter standardization used during
 * training is folded into the first dense layer on export.
 */

import * as tf from "@tensorflow/tfjs";
import { CholeskyDecomposition, Matrix } from "ml-matrix";

import type { Dataset } from "./dataset.js";
import { splitIndices } from "./dataset.js";
import {
  codesFor,
  constructLinearBranch,
  codePredictionError,
  type ConstructOptions,
  type LinearBranch,
} from "./construct.js";
import { convFeatures, forward } from "./forward.js";
import { buildParamBranch, DEFAULT_CONFIG, extractParamBranch } from "./model.js";
import type { ParamConvConfig, TensorMap } from "./weights.js";

export interface TrainOptions extends Partial<ConstructOptions> {
  steps: number;
  batchSize: number;
  learningRate: number;
  /** multiply the learning rate by this factor on plateau */
  plateauFactor: number;
  /** steps without a new best validation loss before decaying */
  plateauPatience: number;
  /** evaluate validation loss every this many steps */
  evalEvery: number;
  valFraction: number;
  /** half-width of the scaled-offset range covered by the code regression */
  offsetRange: number;
  /** code regression samples per parameter class */
  samplesPerClass: number;
  seed: number;
  logEvery: number;
  log: (line: string) => void;
}

export const DEFAULT_TRAIN: TrainOptions = {
  steps: 2000,
  batchSize: 64,
  learningRate: 1e-3,
  plateauFactor: 0.6,
  plateauPatience: 400,
  evalEvery: 25,
  valFraction: 0.15,
  offsetRange: 3.5,
  samplesPerClass: 57,
  seed: 12345,
  logEvery: 500,
  log: (line) => console.log(line),
};

export interface TrainResult {
  tensors: TensorMap;
  cfg: ParamConvConfig;
  /** rel RMS of the linear branch with exact codes, over the dataset */
  exactCodeRelRms: number;
  /** final MSE of the code regression on its validation split */
  codeValMse: number;
  /** rel RMS of the full exported model over the dataset */
  datasetRelRms: number;
  steps: number;
}

function makeRand(seed: number): () => number {
  let state = (seed >>> 0) || 1;
  return () => {
    state ^= state << 13;
    state >>>= 0;
    state ^= state >> 17;
    state ^= state << 5;
    state >>>= 0;
    return state / 0xffffffff;
  };
}

interface CodeSet {
  /** standardized parameter rows */
  inputs: Float32Array;
  targets: Float32Array;
  /** the same data at full precision, for the closed-form readout */
  inputs64: Float64Array;
  targets64: Float64Array;
  count: number;
  mean: Float64Array;
  std: Float64Array;
}

function buildCodeSet(branch: LinearBranch, o: TrainOptions): CodeSet {
  const m = branch.m;
  const rows: number[][] = [];
  const targets: Float64Array[] = [];
  for (const group of branch.groups) {
    for (let i = 0; i < o.samplesPerClass; i++) {
      const x = -o.offsetRange + (2 * o.offsetRange * i) / (o.samplesPerClass - 1);
      const p = [group.label, group.center + x * group.halfSpread];
      rows.push(p);
      targets.push(codesFor(branch, p));
    }
  }
  const count = rows.length;
  const mean = new Float64Array(2);
  const std = new Float64Array(2);
  for (const r of rows) for (let j = 0; j < 2; j++) mean[j] += r[j];
  for (let j = 0; j < 2; j++) mean[j] /= count;
  for (const r of rows) for (let j = 0; j < 2; j++) std[j] += (r[j] - mean[j]) ** 2;
  for (let j = 0; j < 2; j++) {
    std[j] = Math.sqrt(std[j] / count);
    if (std[j] < 1e-12) std[j] = 1;
  }
  const inputs = new Float32Array(count * 2);
  const inputs64 = new Float64Array(count * 2);
  const flat = new Float32Array(count * m);
  const flat64 = new Float64Array(count * m);
  rows.forEach((r, i) => {
    for (let j = 0; j < 2; j++) {
      inputs64[i * 2 + j] = (r[j] - mean[j]) / std[j];
      inputs[i * 2 + j] = inputs64[i * 2 + j];
    }
    flat64.set(targets[i], i * m);
    flat.set(Float32Array.from(targets[i]), i * m);
  });
  return { inputs, targets: flat, inputs64, targets64: flat64, count, mean, std };
}

/**
 * Seeded uniform re-initialization of the convolutional feature stack.
 * The default framework init keeps the tanh units too correlated for a
 * two-dimensional input; a wider spread (weights and biases) yields
 * feature matrices of much higher numerical rank, which both speeds up
 * the gradient phase and improves the closed-form readout.
 */
function initFeatureStack(model: tf.LayersModel, cfg: ParamConvConfig, rand: () => number): void {
  const scale = 1.5;
  const uniform = (n: number, s: number) =>
    Float32Array.from({ length: n }, () => s * (2 * rand() - 1));
  const c = cfg.convChannels;
  const k = cfg.convKernel;
  const layers: [string, number[], number, number[], number][] = [
    ["pre", [cfg.nParams, cfg.preprocessWidth], scale, [cfg.preprocessWidth], scale],
    ["conv1", [k, k, 1, c], scale / 3, [c], 0.3 * scale],
    ["conv2", [k, k, c, c], scale / c, [c], 0.3 * scale],
  ];
  for (const [name, kShape, kScale, bShape, bScale] of layers) {
    const kSize = kShape.reduce((a, b) => a * b, 1);
    const values = [
      tf.tensor(uniform(kSize, kScale), kShape, "float32"),
      tf.tensor(uniform(bShape[0], bScale), bShape, "float32"),
    ];
    model.getLayer(name).setWeights(values);
    values.forEach((v) => v.dispose());
  }
}

/**
 * Float64 ridge solve of the readout: minimize |[F 1] W - T|^2 with a
 * tiny trace-scaled penalty.  Returns the (d+1, m) solution with the
 * bias row last.
 */
function solveReadout(features: Matrix, targets: Matrix, ridge = 1e-12): Matrix {
  const n = features.rows;
  const d = features.columns;
  const X = new Matrix(n, d + 1);
  for (let i = 0; i < n; i++) {
    for (let j = 0; j < d; j++) X.set(i, j, features.get(i, j));
    X.set(i, d, 1);
  }
  const gram = X.transpose().mmul(X);
  for (let i = 0; i <= d; i++) {
    for (let j = i + 1; j <= d; j++) {
      const avg = (gram.get(i, j) + gram.get(j, i)) / 2;
      gram.set(i, j, avg);
      gram.set(j, i, avg);
    }
  }
  const lambda = (ridge * gram.trace()) / (d + 1);
  for (let j = 0; j <= d; j++) gram.set(j, j, gram.get(j, j) + lambda);
  return new CholeskyDecomposition(gram).solve(X.transpose().mmul(targets));
}

/** Fold z = (p - mean)/std into the first dense layer's weights. */
function foldStandardization(tensors: TensorMap, mean: Float64Array, std: Float64Array): void {
  const [nIn, nOut] = tensors.pre_w.shape;
  const w = tensors.pre_w.data;
  const b = tensors.pre_b.data;
  for (let i = 0; i < nIn; i++) {
    for (let j = 0; j < nOut; j++) {
      const scaled = w[i * nOut + j] / std[i];
      b[j] -= mean[i] * scaled;
      w[i * nOut + j] = scaled;
    }
  }
}

function datasetRelRms(cfg: ParamConvConfig, tensors: TensorMap, ds: Dataset): number {
  let err = 0;
  let ref = 0;
  for (let i = 0; i < ds.count; i++) {
    const p = Float64Array.from(ds.params.subarray(i * cfg.nParams, (i + 1) * cfg.nParams));
    const g = Float64Array.from(ds.g.subarray(i * cfg.m, (i + 1) * cfg.m));
    const pred = forward(cfg, tensors, g, p);
    for (let j = 0; j < cfg.m; j++) {
      const t = ds.phi[i * cfg.m + j];
      err += (pred[j] - t) ** 2;
      ref += t ** 2;
    }
  }
  return Math.sqrt(err / ref);
}

export async function train(ds: Dataset, opts: Partial<TrainOptions> = {}): Promise<TrainResult> {
  const o: TrainOptions = { ...DEFAULT_TRAIN, ...opts };
  const cfg: ParamConvConfig = { ...DEFAULT_CONFIG, m: ds.m, nParams: ds.nParams };

  const constructOpts: Partial<ConstructOptions> = {};
  if (o.ridge !== undefined) constructOpts.ridge = o.ridge;
  if (o.slopeFraction !== undefined) constructOpts.slopeFraction = o.slopeFraction;
  const branch = constructLinearBranch(ds, constructOpts);
  const exactErr = codePredictionError(branch, ds);
  o.log(
    `linear branch: ${branch.groups.length} classes, ` +
      `exact-code rel RMS ${exactErr.toExponential(3)}`,
  );

  const codeSet = buildCodeSet(branch, o);
  const { train: trainIdx, val: valIdx } = splitIndices(codeSet.count, o.valFraction, o.seed);
  o.log(`code regression: ${trainIdx.length} train / ${valIdx.length} val samples`);

  // conv gradients require the plain cpu backend
  await tf.setBackend("cpu");
  const model = buildParamBranch(cfg);
  const rand = makeRand(o.seed);
  initFeatureStack(model, cfg, rand);
  const gather = (idx: number[], width: number, src: Float32Array) => {
    const out = new Float32Array(idx.length * width);
    idx.forEach((rec, row) => out.set(src.subarray(rec * width, (rec + 1) * width), row * width));
    return out;
  };
  const trP = tf.tensor2d(gather(trainIdx, 2, codeSet.inputs), [trainIdx.length, 2]);
  const trC = tf.tensor2d(gather(trainIdx, cfg.m, codeSet.targets), [trainIdx.length, cfg.m]);
  const vaP = tf.tensor2d(gather(valIdx, 2, codeSet.inputs), [valIdx.length, 2]);
  const vaC = tf.tensor2d(gather(valIdx, cfg.m, codeSet.targets), [valIdx.length, cfg.m]);

  const valMse = () =>
    tf.tidy(() =>
      tf.losses.meanSquaredError(vaC, model.apply(vaP) as tf.Tensor2D).dataSync()[0],
    );

  let lr = o.learningRate;
  const optimizer = tf.train.adam(lr);
  let bestVal = Infinity;
  let sinceBest = 0;
  let step = 0;
  for (; step < o.steps; step++) {
    const batch = Math.min(o.batchSize, trainIdx.length);
    const idx = new Int32Array(batch);
    for (let i = 0; i < batch; i++) idx[i] = Math.floor(rand() * trainIdx.length);
    tf.tidy(() => {
      const sel = tf.tensor1d(idx, "int32");
      const bp = tf.gather(trP, sel);
      const bc = tf.gather(trC, sel);
      optimizer.minimize(
        () => tf.losses.meanSquaredError(bc, model.apply(bp) as tf.Tensor2D) as tf.Scalar,
      );
    });
    if ((step + 1) % o.evalEvery === 0) {
      const v = valMse();
      if (v < bestVal * (1 - 1e-4)) {
        bestVal = v;
        sinceBest = 0;
      } else {
        sinceBest += o.evalEvery;
        if (sinceBest >= o.plateauPatience) {
          lr *= o.plateauFactor;
          (optimizer as unknown as { learningRate: number }).learningRate = lr;
          sinceBest = 0;
          o.log(`step ${step + 1}: plateau, learning rate -> ${lr.toExponential(3)}`);
          if (lr < 1e-5) {
            step += 1;
            break;
          }
        }
      }
      if ((step + 1) % o.logEvery === 0) {
        o.log(`step ${step + 1}: code_val_mse=${v.toExponential(4)} lr=${lr.toExponential(2)}`);
      }
    }
  }
  // stage 3: freeze the trained feature stack and re-solve the readout
  // in float64 over the full code set
  const tensors = extractParamBranch(model) as TensorMap;
  const nFeat = cfg.convGrid[0] * cfg.convGrid[1] * cfg.convChannels;
  const featRows = new Matrix(codeSet.count, nFeat);
  for (let i = 0; i < codeSet.count; i++) {
    const z = codeSet.inputs64.subarray(i * 2, (i + 1) * 2);
    const f = convFeatures(cfg, tensors, Float64Array.from(z));
    for (let j = 0; j < nFeat; j++) featRows.set(i, j, f[j]);
  }
  const targetRows = new Matrix(codeSet.count, cfg.m);
  for (let i = 0; i < codeSet.count; i++) {
    for (let j = 0; j < cfg.m; j++) targetRows.set(i, j, codeSet.targets64[i * cfg.m + j]);
  }
  const readout = solveReadout(featRows, targetRows);
  const pdw = new Float64Array(nFeat * cfg.m);
  const pdb = new Float64Array(cfg.m);
  for (let i = 0; i < nFeat; i++) {
    for (let j = 0; j < cfg.m; j++) pdw[i * cfg.m + j] = readout.get(i, j);
  }
  for (let j = 0; j < cfg.m; j++) pdb[j] = readout.get(nFeat, j);
  tensors.param_dense_w = { shape: [nFeat, cfg.m], data: pdw };
  tensors.param_dense_b = { shape: [cfg.m], data: pdb };

  // report the code MSE of the final weights on the validation split
  let codeValMse = 0;
  for (const rec of valIdx) {
    for (let j = 0; j < cfg.m; j++) {
      let acc = pdb[j];
      for (let i = 0; i < nFeat; i++) acc += featRows.get(rec, i) * pdw[i * cfg.m + j];
      codeValMse += (acc - codeSet.targets64[rec * cfg.m + j]) ** 2;
    }
  }
  codeValMse /= valIdx.length * cfg.m;

  // assemble: parameter branch + float64 linear branch
  tensors.lin_w = { shape: [cfg.m, cfg.m], data: Float64Array.from(branch.lin.to1DArray()) };
  tensors.head_w = { shape: [cfg.m, cfg.m], data: Float64Array.from(branch.head.to1DArray()) };
  foldStandardization(tensors, codeSet.mean, codeSet.std);

  const result: TrainResult = {
    tensors,
    cfg,
    exactCodeRelRms: exactErr,
    codeValMse,
    datasetRelRms: datasetRelRms(cfg, tensors, ds),
    steps: step,
  };
  trP.dispose();
  trC.dispose();
  vaP.dispose();
  vaC.dispose();
  model.dispose();
  return result;
}
