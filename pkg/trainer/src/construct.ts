/**
 * Float64 construction of the linear branch of the operator model.
 *
 * The dataset samples a two-parameter family (a small set of discrete
 * shape classes, each with a cluster of nearby values of a continuous
 * parameter).  Per class the density operator is fitted as a local
 * linear family W(x) = Wbar + x * Wslope, where x is the continuous
 * parameter centered and scaled within the class.  Both matrices are
 * compressed by reduced-rank regression and packed into disjoint column
 * blocks of the shared `lin` / `head` tensors, so the elementwise
 * modulation vector selects and blends them:
 *
 *   codes(class c, offset x) = [ ..0.., 1 (mean block of c),
 *                                x (slope block of c), ..0.. ]
 *
 * The nonlinear parameter branch is later trained to reproduce exactly
 * this code function, which is cheap because it is low-dimensional and
 * piecewise affine.
 */

import {
  CholeskyDecomposition,
  Matrix,
  SingularValueDecomposition,
} from "ml-matrix";

import type { Dataset } from "./dataset.js";

export interface ParamGroup {
  /** value of the discrete first parameter */
  label: number;
  /** center and half-spread of the continuous second parameter */
  center: number;
  halfSpread: number;
  /** record indices belonging to the group */
  records: number[];
  /** slot ranges [start, end) in the 128-slot modulation vector */
  meanSlots: [number, number];
  slopeSlots: [number, number];
}

export interface LinearBranch {
  /** (m, m) column blocks: data-side factors */
  lin: Matrix;
  /** (m, m) row blocks: output-side factors */
  head: Matrix;
  groups: ParamGroup[];
  m: number;
}

/** codes vector for a raw parameter vector [label, continuousValue] */
export function codesFor(branch: LinearBranch, params: ArrayLike<number>): Float64Array {
  const codes = new Float64Array(branch.m);
  const group = branch.groups.find((g) => Math.abs(g.label - params[0]) < 1e-9);
  if (!group) return codes;
  const x = (params[1] - group.center) / group.halfSpread;
  for (let s = group.meanSlots[0]; s < group.meanSlots[1]; s++) codes[s] = 1;
  for (let s = group.slopeSlots[0]; s < group.slopeSlots[1]; s++) codes[s] = x;
  return codes;
}

function groupRecords(ds: Dataset): { label: number; records: number[] }[] {
  if (ds.nParams !== 2) {
    throw new Error(
      `construction expects 2 parameters (discrete class, continuous value), got ${ds.nParams}`,
    );
  }
  const byLabel = new Map<number, number[]>();
  for (let i = 0; i < ds.count; i++) {
    const label = ds.params[i * 2];
    const list = byLabel.get(label);
    if (list) list.push(i);
    else byLabel.set(label, [i]);
  }
  return [...byLabel.entries()]
    .sort((a, b) => a[0] - b[0])
    .map(([label, records]) => ({ label, records }));
}

/**
 * Joint ridge fit of (Wbar, Wslope) for one group: minimize over both
 * matrices the squared error of phi ~ g Wbar + x * (g Wslope).
 */
function fitLocalFamily(
  ds: Dataset,
  records: number[],
  xs: Float64Array,
  ridge: number,
): { wbar: Matrix; wslope: Matrix; gp: Matrix } {
  const m = ds.m;
  const n = records.length;
  const X = new Matrix(n, 2 * m);
  const Y = new Matrix(n, m);
  records.forEach((rec, row) => {
    for (let j = 0; j < m; j++) {
      const gj = ds.g[rec * m + j];
      X.set(row, j, gj);
      X.set(row, m + j, xs[row] * gj);
      Y.set(row, j, ds.phi[rec * m + j]);
    }
  });
  const gram = X.transpose().mmul(X);
  // enforce exact symmetry (rounding noise trips the Cholesky check)
  for (let i = 0; i < 2 * m; i++) {
    for (let j = i + 1; j < 2 * m; j++) {
      const avg = (gram.get(i, j) + gram.get(j, i)) / 2;
      gram.set(i, j, avg);
      gram.set(j, i, avg);
    }
  }
  const lambda = (ridge * gram.trace()) / (2 * m);
  for (let j = 0; j < 2 * m; j++) gram.set(j, j, gram.get(j, j) + lambda);
  const rhs = X.transpose().mmul(Y);
  const w = new CholeskyDecomposition(gram).solve(rhs); // (2m, m)
  return {
    wbar: w.subMatrix(0, m - 1, 0, m - 1),
    wslope: w.subMatrix(m, 2 * m - 1, 0, m - 1),
    gp: X.subMatrix(0, n - 1, 0, m - 1),
  };
}

/**
 * Reduced-rank regression truncation: keep the `rank` output directions
 * that carry the most prediction energy on the group's own data, and
 * return the factor pair (W V, V^T) whose product is the truncated map.
 */
function truncate(w: Matrix, gp: Matrix, rank: number): { left: Matrix; right: Matrix } {
  const pred = gp.mmul(w); // (n, m)
  const svd = new SingularValueDecomposition(pred, { autoTranspose: true });
  const v = svd.rightSingularVectors; // (m, min(n, m))
  const vr = v.subMatrix(0, v.rows - 1, 0, rank - 1); // (m, rank)
  return { left: w.mmul(vr), right: vr.transpose() };
}

export interface ConstructOptions {
  ridge: number;
  /** fraction of each group's slot budget given to the slope block */
  slopeFraction: number;
}

export const DEFAULT_CONSTRUCT: ConstructOptions = {
  ridge: 1e-10,
  slopeFraction: 0.25,
};

export function constructLinearBranch(
  ds: Dataset,
  opts: Partial<ConstructOptions> = {},
): LinearBranch {
  const o = { ...DEFAULT_CONSTRUCT, ...opts };
  const m = ds.m;
  const raw = groupRecords(ds);
  if (raw.length === 0) throw new Error("empty dataset");
  const budget = Math.floor(m / raw.length);
  if (budget < 4) throw new Error(`too many parameter classes for ${m} modulation slots`);

  const lin = Matrix.zeros(m, m);
  const head = Matrix.zeros(m, m);
  const groups: ParamGroup[] = [];
  let slot = 0;
  for (const { label, records } of raw) {
    const svals = records.map((r) => ds.params[r * 2 + 1]);
    const lo = Math.min(...svals);
    const hi = Math.max(...svals);
    const center = (lo + hi) / 2;
    const halfSpread = hi > lo ? (hi - lo) / 2 : 1;
    const xs = Float64Array.from(records, (r) => (ds.params[r * 2 + 1] - center) / halfSpread);
    const hasSlope = hi > lo;
    const slopeRank = hasSlope ? Math.max(2, Math.round(budget * o.slopeFraction)) : 0;
    const meanRank = Math.min(budget - slopeRank, records.length);

    const { wbar, wslope, gp } = fitLocalFamily(ds, records, xs, o.ridge);
    const mean = truncate(wbar, gp, meanRank);
    const meanSlots: [number, number] = [slot, slot + meanRank];
    for (let r = 0; r < meanRank; r++, slot++) {
      for (let i = 0; i < m; i++) {
        lin.set(i, slot, mean.left.get(i, r));
        head.set(slot, i, mean.right.get(r, i));
      }
    }
    let slopeSlots: [number, number] = [slot, slot];
    if (slopeRank > 0) {
      const slope = truncate(wslope, gp, slopeRank);
      slopeSlots = [slot, slot + slopeRank];
      for (let r = 0; r < slopeRank; r++, slot++) {
        for (let i = 0; i < m; i++) {
          lin.set(i, slot, slope.left.get(i, r));
          head.set(slot, i, slope.right.get(r, i));
        }
      }
    }
    groups.push({ label, center, halfSpread, records, meanSlots, slopeSlots });
  }
  return { lin, head, groups, m };
}

/** Model prediction using exact codes (the net-free reference). */
export function predictWithCodes(
  branch: LinearBranch,
  g: Float64Array,
  params: ArrayLike<number>,
): Float64Array {
  const m = branch.m;
  const codes = codesFor(branch, params);
  const out = new Float64Array(m);
  const gated = new Float64Array(m);
  for (let s = 0; s < m; s++) {
    if (codes[s] === 0) continue;
    let acc = 0;
    for (let i = 0; i < m; i++) acc += g[i] * branch.lin.get(i, s);
    gated[s] = acc * codes[s];
  }
  for (let s = 0; s < m; s++) {
    const gs = gated[s];
    if (gs === 0) continue;
    for (let i = 0; i < m; i++) out[i] += gs * branch.head.get(s, i);
  }
  return out;
}

/** Relative RMS of the code-based prediction over a set of records. */
export function codePredictionError(branch: LinearBranch, ds: Dataset, records?: number[]): number {
  const idx = records ?? Array.from({ length: ds.count }, (_, i) => i);
  let err = 0;
  let ref = 0;
  for (const rec of idx) {
    const g = Float64Array.from(ds.g.subarray(rec * ds.m, (rec + 1) * ds.m));
    const p = [ds.params[rec * 2], ds.params[rec * 2 + 1]];
    const pred = predictWithCodes(branch, g, p);
    for (let j = 0; j < ds.m; j++) {
      const t = ds.phi[rec * ds.m + j];
      err += (pred[j] - t) ** 2;
      ref += t ** 2;
    }
  }
  return Math.sqrt(err / ref);
}
