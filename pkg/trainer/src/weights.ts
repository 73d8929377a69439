/**
 * Writer/reader for the KFBIW1 weights container (param-conv kind).
 *
 * Byte layout matches the solver package: ASCII header with `key value`
 * lines, one `tensor name dims...` line per tensor in a fixed order,
 * an `end` line, then the tensor payloads as float64 little-endian in
 * row-major order.
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface ParamConvConfig {
  m: number;
  nParams: number;
  preprocessWidth: number;
  convGrid: [number, number];
  convChannels: number;
  convKernel: number;
  activation: string;
}

export const TENSOR_ORDER = [
  "pre_w",
  "pre_b",
  "conv1_k",
  "conv1_b",
  "conv2_k",
  "conv2_b",
  "param_dense_w",
  "param_dense_b",
  "lin_w",
  "head_w",
] as const;

export type TensorName = (typeof TENSOR_ORDER)[number];

export interface NamedTensor {
  shape: number[];
  /** row-major float64 values */
  data: Float64Array;
}

export type TensorMap = Record<TensorName, NamedTensor>;

export function expectedShapes(cfg: ParamConvConfig): Record<TensorName, number[]> {
  const [gh, gw] = cfg.convGrid;
  const c = cfg.convChannels;
  const k = cfg.convKernel;
  return {
    pre_w: [cfg.nParams, cfg.preprocessWidth],
    pre_b: [cfg.preprocessWidth],
    conv1_k: [k, k, 1, c],
    conv1_b: [c],
    conv2_k: [k, k, c, c],
    conv2_b: [c],
    param_dense_w: [gh * gw * c, cfg.m],
    param_dense_b: [cfg.m],
    lin_w: [cfg.m, cfg.m],
    head_w: [cfg.m, cfg.m],
  };
}

function sizeOf(shape: number[]): number {
  return shape.reduce((a, b) => a * b, 1);
}

export function validateTensors(cfg: ParamConvConfig, tensors: TensorMap): void {
  const exp = expectedShapes(cfg);
  for (const name of TENSOR_ORDER) {
    const t = tensors[name];
    if (!t) throw new Error(`missing tensor '${name}'`);
    const want = exp[name];
    if (t.shape.length !== want.length || t.shape.some((d, i) => d !== want[i])) {
      throw new Error(`tensor '${name}' shape [${t.shape}] != expected [${want}]`);
    }
    if (t.data.length !== sizeOf(want)) {
      throw new Error(`tensor '${name}' has ${t.data.length} values, expected ${sizeOf(want)}`);
    }
  }
}

export function writeWeights(path: string, cfg: ParamConvConfig, tensors: TensorMap): void {
  validateTensors(cfg, tensors);
  const lines = [
    "KFBIW1",
    "kind param-conv",
    `m ${cfg.m}`,
    `n_params ${cfg.nParams}`,
    `preprocess_width ${cfg.preprocessWidth}`,
    `conv_grid ${cfg.convGrid[0]} ${cfg.convGrid[1]}`,
    `conv_channels ${cfg.convChannels}`,
    `conv_kernel ${cfg.convKernel}`,
    `activation ${cfg.activation}`,
  ];
  for (const name of TENSOR_ORDER) {
    lines.push(`tensor ${name} ${tensors[name].shape.join(" ")}`);
  }
  lines.push("end");
  const header = Buffer.from(lines.join("\n") + "\n", "ascii");
  const chunks = [header];
  for (const name of TENSOR_ORDER) {
    const arr = tensors[name].data;
    const buf = Buffer.alloc(arr.length * 8);
    for (let i = 0; i < arr.length; i++) buf.writeDoubleLE(arr[i], i * 8);
    chunks.push(buf);
  }
  writeFileSync(path, Buffer.concat(chunks));
}

export function readWeights(path: string): { cfg: ParamConvConfig; tensors: TensorMap } {
  const blob = readFileSync(path);
  let pos = blob.indexOf(0x0a);
  if (pos < 0 || blob.subarray(0, pos).toString("ascii") !== "KFBIW1") {
    throw new Error(`${path}: not a KFBIW1 weights file`);
  }
  pos += 1;
  const fields = new Map<string, string[]>();
  const specs: { name: string; shape: number[] }[] = [];
  for (;;) {
    const next = blob.indexOf(0x0a, pos);
    if (next < 0) throw new Error(`${path}: truncated header`);
    const line = blob.subarray(pos, next).toString("ascii");
    pos = next + 1;
    if (line === "end") break;
    const parts = line.split(/\s+/);
    if (parts[0] === "tensor") {
      specs.push({ name: parts[1], shape: parts.slice(2).map((s) => parseInt(s, 10)) });
    } else {
      fields.set(parts[0], parts.slice(1));
    }
  }
  if (fields.get("kind")?.[0] !== "param-conv") {
    throw new Error(`${path}: unsupported kind '${fields.get("kind")?.[0]}'`);
  }
  const intField = (key: string) => parseInt(fields.get(key)![0], 10);
  const cfg: ParamConvConfig = {
    m: intField("m"),
    nParams: intField("n_params"),
    preprocessWidth: intField("preprocess_width"),
    convGrid: [
      parseInt(fields.get("conv_grid")![0], 10),
      parseInt(fields.get("conv_grid")![1], 10),
    ],
    convChannels: intField("conv_channels"),
    convKernel: intField("conv_kernel"),
    activation: fields.get("activation")![0],
  };
  const tensors = {} as TensorMap;
  for (const spec of specs) {
    const n = sizeOf(spec.shape);
    const data = new Float64Array(n);
    for (let i = 0; i < n; i++, pos += 8) data[i] = blob.readDoubleLE(pos);
    tensors[spec.name as TensorName] = { shape: spec.shape, data };
  }
  if (pos !== blob.length) {
    throw new Error(`${path}: ${blob.length - pos} trailing bytes after payload`);
  }
  validateTensors(cfg, tensors);
  return { cfg, tensors };
}
