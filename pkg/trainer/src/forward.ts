/**
 * Reference float64 forward pass for the param-conv operator model.
 *
 * This mirrors the inference path of the solver package exactly:
 *   modulation  i1 = dense(flatten(conv(conv(reshape(tanh(p W + b))))))
 *   linear path i2 = g @ lin_w            (bias-free)
 *   output      phi = (i1 * i2) @ head_w  (bias-free)
 * so golden outputs written here must match the consumer to rounding.
 */

import type { ParamConvConfig, TensorMap } from "./weights.js";

/** y[out] += x[in] @ w[in][out], dense layer with optional bias. */
function dense(
  x: Float64Array,
  w: Float64Array,
  nIn: number,
  nOut: number,
  bias?: Float64Array,
): Float64Array {
  const y = new Float64Array(nOut);
  if (bias) y.set(bias);
  for (let i = 0; i < nIn; i++) {
    const xi = x[i];
    if (xi === 0) continue;
    const row = i * nOut;
    for (let j = 0; j < nOut; j++) y[j] += xi * w[row + j];
  }
  return y;
}

/**
 * Same-padded stride-1 cross-correlation on an (h, w, cin) channels-last
 * image with a (k, k, cin, cout) kernel, matching the framework layout.
 */
function conv2dSame(
  x: Float64Array,
  h: number,
  w: number,
  cin: number,
  kernel: Float64Array,
  k: number,
  cout: number,
  bias: Float64Array,
): Float64Array {
  const pad = Math.floor(k / 2);
  const y = new Float64Array(h * w * cout);
  for (let oy = 0; oy < h; oy++) {
    for (let ox = 0; ox < w; ox++) {
      const out = (oy * w + ox) * cout;
      for (let oc = 0; oc < cout; oc++) y[out + oc] = bias[oc];
      for (let dy = 0; dy < k; dy++) {
        const iy = oy + dy - pad;
        if (iy < 0 || iy >= h) continue;
        for (let dx = 0; dx < k; dx++) {
          const ix = ox + dx - pad;
          if (ix < 0 || ix >= w) continue;
          const inp = (iy * w + ix) * cin;
          const ker = (dy * k + dx) * cin * cout;
          for (let ic = 0; ic < cin; ic++) {
            const xv = x[inp + ic];
            for (let oc = 0; oc < cout; oc++) {
              y[out + oc] += xv * kernel[ker + ic * cout + oc];
            }
          }
        }
      }
    }
  }
  return y;
}

function tanhInPlace(x: Float64Array): Float64Array {
  for (let i = 0; i < x.length; i++) x[i] = Math.tanh(x[i]);
  return x;
}

/**
 * Flattened convolutional feature vector of the parameter branch, i.e.
 * everything before the final dense readout.  Exposed separately so the
 * trainer can solve that readout in closed form.
 */
export function convFeatures(
  cfg: ParamConvConfig,
  t: TensorMap,
  params: Float64Array,
): Float64Array {
  if (params.length !== cfg.nParams) {
    throw new Error(`parameter vector length ${params.length} != ${cfg.nParams}`);
  }
  const [gh, gw] = cfg.convGrid;
  const c = cfg.convChannels;
  const k = cfg.convKernel;
  let z = dense(params, t.pre_w.data, cfg.nParams, cfg.preprocessWidth, t.pre_b.data);
  z = tanhInPlace(z);
  let img = conv2dSame(z, gh, gw, 1, t.conv1_k.data, k, c, t.conv1_b.data);
  img = tanhInPlace(img);
  img = conv2dSame(img, gh, gw, c, t.conv2_k.data, k, c, t.conv2_b.data);
  return tanhInPlace(img);
}

/** Modulation vector i1 from the parameter branch. */
export function modulation(cfg: ParamConvConfig, t: TensorMap, params: Float64Array): Float64Array {
  const [gh, gw] = cfg.convGrid;
  const feats = convFeatures(cfg, t, params);
  return dense(feats, t.param_dense_w.data, gh * gw * cfg.convChannels, cfg.m, t.param_dense_b.data);
}

/** Full forward pass: boundary data + parameters -> density. */
export function forward(
  cfg: ParamConvConfig,
  t: TensorMap,
  g: Float64Array,
  params: Float64Array,
): Float64Array {
  if (g.length !== cfg.m) {
    throw new Error(`input length ${g.length} != model size ${cfg.m}`);
  }
  const i1 = modulation(cfg, t, params);
  const i2 = dense(g, t.lin_w.data, cfg.m, cfg.m);
  for (let i = 0; i < cfg.m; i++) i2[i] *= i1[i];
  return dense(i2, t.head_w.data, cfg.m, cfg.m);
}
