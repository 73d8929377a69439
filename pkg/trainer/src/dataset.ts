/**
 * Reader for the KFBID1 dataset container produced by the solver pipeline.
 *
 * Layout: an ASCII header (magic line, `key value...` lines, closing
 * `end` line) followed by float64 little-endian records of
 * [params | boundary data g | density phi].
 */

import { readFileSync, writeFileSync } from "node:fs";

export interface Dataset {
  m: number;
  nParams: number;
  paramNames: string[];
  count: number;
  /** row-major (count, nParams) */
  params: Float64Array;
  /** row-major (count, m) */
  g: Float64Array;
  /** row-major (count, m) */
  phi: Float64Array;
}

const MAGIC = "KFBID1";

export function readDataset(path: string): Dataset {
  const blob = readFileSync(path);
  let pos = blob.indexOf(0x0a);
  if (pos < 0 || blob.subarray(0, pos).toString("ascii") !== MAGIC) {
    throw new Error(`${path}: not a ${MAGIC} dataset file`);
  }
  pos += 1;
  const fields = new Map<string, string[]>();
  for (;;) {
    const next = blob.indexOf(0x0a, pos);
    if (next < 0) throw new Error(`${path}: truncated header`);
    const line = blob.subarray(pos, next).toString("ascii");
    pos = next + 1;
    if (line === "end") break;
    const parts = line.split(/\s+/);
    fields.set(parts[0], parts.slice(1));
  }
  const m = parseInt(fields.get("m")![0], 10);
  const nParams = parseInt(fields.get("n_params")![0], 10);
  const count = parseInt(fields.get("count")![0], 10);
  const paramNames = fields.get("param_names") ?? [];

  const recordLen = (nParams + 2 * m) * 8;
  if (blob.length - pos !== count * recordLen) {
    throw new Error(`${path}: payload size mismatch`);
  }
  const params = new Float64Array(count * nParams);
  const g = new Float64Array(count * m);
  const phi = new Float64Array(count * m);
  for (let i = 0; i < count; i++) {
    let off = pos + i * recordLen;
    for (let j = 0; j < nParams; j++, off += 8) {
      params[i * nParams + j] = blob.readDoubleLE(off);
    }
    for (let j = 0; j < m; j++, off += 8) {
      g[i * m + j] = blob.readDoubleLE(off);
    }
    for (let j = 0; j < m; j++, off += 8) {
      phi[i * m + j] = blob.readDoubleLE(off);
    }
  }
  return { m, nParams, paramNames, count, params, g, phi };
}

/** Write records back out in the same container (used for golden files). */
export function writeDataset(path: string, ds: Dataset): void {
  const lines = [
    MAGIC,
    `m ${ds.m}`,
    `n_params ${ds.nParams}`,
    `param_names ${ds.paramNames.join(" ")}`,
    `count ${ds.count}`,
    "end",
  ];
  const header = Buffer.from(lines.join("\n") + "\n", "ascii");
  const recordLen = (ds.nParams + 2 * ds.m) * 8;
  const payload = Buffer.alloc(ds.count * recordLen);
  for (let i = 0; i < ds.count; i++) {
    let off = i * recordLen;
    for (let j = 0; j < ds.nParams; j++, off += 8) {
      payload.writeDoubleLE(ds.params[i * ds.nParams + j], off);
    }
    for (let j = 0; j < ds.m; j++, off += 8) {
      payload.writeDoubleLE(ds.g[i * ds.m + j], off);
    }
    for (let j = 0; j < ds.m; j++, off += 8) {
      payload.writeDoubleLE(ds.phi[i * ds.m + j], off);
    }
  }
  writeFileSync(path, Buffer.concat([header, payload]));
}

/** Distinct parameter vectors, in first-appearance order. */
export function uniqueParamPoints(ds: Dataset): number[][] {
  const seen = new Map<string, number[]>();
  for (let i = 0; i < ds.count; i++) {
    const p = Array.from(ds.params.subarray(i * ds.nParams, (i + 1) * ds.nParams));
    const key = p.join(",");
    if (!seen.has(key)) seen.set(key, p);
  }
  return [...seen.values()];
}

/** Deterministic train/validation split by record index hash. */
export function splitIndices(count: number, valFraction: number, seed: number): {
  train: number[];
  val: number[];
} {
  // xorshift-based shuffle so the split is reproducible across runs
  let state = (seed >>> 0) || 1;
  const rand = () => {
    state ^= state << 13;
    state >>>= 0;
    state ^= state >> 17;
    state ^= state << 5;
    state >>>= 0;
    return state / 0xffffffff;
  };
  const order = Array.from({ length: count }, (_, i) => i);
  for (let i = count - 1; i > 0; i--) {
    const j = Math.floor(rand() * (i + 1));
    [order[i], order[j]] = [order[j], order[i]];
  }
  const nVal = Math.round(count * valFraction);
  return { val: order.slice(0, nVal), train: order.slice(nVal) };
}
