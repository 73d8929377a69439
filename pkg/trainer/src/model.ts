/**
 * tfjs model for the param-conv operator: a nonlinear parameter branch
 * produces a modulation vector that gates a bias-free linear map of the
 * boundary data before a bias-free dense head.  Layer weight layouts
 * (dense kernels [in, out], conv kernels [kh, kw, inCh, outCh]) match
 * the float64 reference forward pass and the KFBIW1 container directly.
 */

import * as tf from "@tensorflow/tfjs";

import type { NamedTensor, ParamConvConfig, TensorMap, TensorName } from "./weights.js";
import { expectedShapes } from "./weights.js";

export const DEFAULT_CONFIG: Omit<ParamConvConfig, "m" | "nParams"> = {
  preprocessWidth: 32,
  convGrid: [4, 8],
  convChannels: 8,
  convKernel: 3,
  activation: "tanh",
};

/** (layer name, kernel tensor name, bias tensor name or null) */
const LAYER_TENSORS: [string, TensorName, TensorName | null][] = [
  ["pre", "pre_w", "pre_b"],
  ["conv1", "conv1_k", "conv1_b"],
  ["conv2", "conv2_k", "conv2_b"],
  ["param_dense", "param_dense_w", "param_dense_b"],
  ["lin", "lin_w", null],
  ["head", "head_w", null],
];

export function buildModel(cfg: ParamConvConfig): tf.LayersModel {
  if (cfg.activation !== "tanh") {
    throw new Error(`unsupported activation '${cfg.activation}'`);
  }
  if (cfg.preprocessWidth !== cfg.convGrid[0] * cfg.convGrid[1]) {
    throw new Error("preprocess width must equal conv grid size");
  }
  const pIn = tf.input({ shape: [cfg.nParams], name: "params" });
  const gIn = tf.input({ shape: [cfg.m], name: "g" });

  let x = tf.layers
    .dense({ units: cfg.preprocessWidth, activation: "tanh", name: "pre" })
    .apply(pIn) as tf.SymbolicTensor;
  x = tf.layers
    .reshape({ targetShape: [cfg.convGrid[0], cfg.convGrid[1], 1], name: "to_image" })
    .apply(x) as tf.SymbolicTensor;
  for (const name of ["conv1", "conv2"]) {
    x = tf.layers
      .conv2d({
        filters: cfg.convChannels,
        kernelSize: cfg.convKernel,
        padding: "same",
        activation: "tanh",
        name,
      })
      .apply(x) as tf.SymbolicTensor;
  }
  x = tf.layers.flatten({ name: "flat" }).apply(x) as tf.SymbolicTensor;
  const i1 = tf.layers
    .dense({ units: cfg.m, name: "param_dense" })
    .apply(x) as tf.SymbolicTensor;

  const i2 = tf.layers
    .dense({ units: cfg.m, useBias: false, name: "lin" })
    .apply(gIn) as tf.SymbolicTensor;

  const gated = tf.layers.multiply({ name: "gate" }).apply([i1, i2]) as tf.SymbolicTensor;
  const out = tf.layers
    .dense({ units: cfg.m, useBias: false, name: "head" })
    .apply(gated) as tf.SymbolicTensor;

  return tf.model({ inputs: [pIn, gIn], outputs: out, name: "param_conv_operator" });
}

/**
 * The parameter branch alone: parameter vector in, modulation codes
 * out.  Layer names match the full model so extraction is shared.
 */
export function buildParamBranch(cfg: ParamConvConfig): tf.LayersModel {
  if (cfg.preprocessWidth !== cfg.convGrid[0] * cfg.convGrid[1]) {
    throw new Error("preprocess width must equal conv grid size");
  }
  const pIn = tf.input({ shape: [cfg.nParams], name: "params" });
  let x = tf.layers
    .dense({ units: cfg.preprocessWidth, activation: "tanh", name: "pre" })
    .apply(pIn) as tf.SymbolicTensor;
  x = tf.layers
    .reshape({ targetShape: [cfg.convGrid[0], cfg.convGrid[1], 1], name: "to_image" })
    .apply(x) as tf.SymbolicTensor;
  for (const name of ["conv1", "conv2"]) {
    x = tf.layers
      .conv2d({
        filters: cfg.convChannels,
        kernelSize: cfg.convKernel,
        padding: "same",
        activation: "tanh",
        name,
      })
      .apply(x) as tf.SymbolicTensor;
  }
  x = tf.layers.flatten({ name: "flat" }).apply(x) as tf.SymbolicTensor;
  const codes = tf.layers
    .dense({ units: cfg.m, name: "param_dense" })
    .apply(x) as tf.SymbolicTensor;
  return tf.model({ inputs: pIn, outputs: codes, name: "param_branch" });
}

/** The four (kernel, bias) pairs of the parameter branch, as float64. */
export function extractParamBranch(model: tf.LayersModel): Pick<
  TensorMap,
  "pre_w" | "pre_b" | "conv1_k" | "conv1_b" | "conv2_k" | "conv2_b" | "param_dense_w" | "param_dense_b"
> {
  const out = {} as TensorMap;
  for (const [layerName, kernelName, biasName] of LAYER_TENSORS.slice(0, 4)) {
    const weights = model.getLayer(layerName).getWeights();
    [kernelName, biasName!].forEach((name, i) => {
      const w = weights[i];
      out[name] = { shape: w.shape.slice(), data: Float64Array.from(w.dataSync()) };
    });
  }
  return out;
}

/** Copy trained layer weights out as float64 named tensors. */
export function extractTensors(model: tf.LayersModel): TensorMap {
  const tensors = {} as TensorMap;
  for (const [layerName, kernelName, biasName] of LAYER_TENSORS) {
    const weights = model.getLayer(layerName).getWeights();
    const names = biasName === null ? [kernelName] : [kernelName, biasName];
    names.forEach((name, i) => {
      const w = weights[i];
      tensors[name] = {
        shape: w.shape.slice(),
        data: Float64Array.from(w.dataSync()),
      } satisfies NamedTensor;
    });
  }
  return tensors;
}

/** Load float64 named tensors into the model (for tests and resuming). */
export function loadTensors(model: tf.LayersModel, cfg: ParamConvConfig, tensors: TensorMap): void {
  const exp = expectedShapes(cfg);
  for (const [layerName, kernelName, biasName] of LAYER_TENSORS) {
    const names = biasName === null ? [kernelName] : [kernelName, biasName];
    const values = names.map((name) =>
      tf.tensor(Array.from(tensors[name].data), exp[name], "float32"),
    );
    model.getLayer(layerName).setWeights(values);
    values.forEach((v) => v.dispose());
  }
}
