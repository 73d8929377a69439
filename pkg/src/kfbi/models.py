"""Solution-operator models: nodal boundary data in, nodal density out.

Two families are provided.  LinearOperatorModel is a plain linear map
(dense M x M or a low-rank bottleneck factorization) trained in-core by
ridge least squares.  ParamOperatorModel additionally takes a small
parameter vector (domain shape, reaction coefficient, ...) through a
nonlinear branch whose output modulates the linear branch elementwise,
so the map from boundary data to density stays exactly linear for fixed
parameters.

Weights travel in the "KFBIW1" container: one ASCII header describing
kind, shapes and tensor order, followed by float64 little-endian
payloads.  The same format is written by the external trainer and read
here for inference.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MAGIC = "KFBIW1"

KIND_DIRECT = "linear-direct"
KIND_BOTTLENECK = "linear-bottleneck"
KIND_PARAM = "param-conv"


class ModelError(ValueError):
    pass


def _tanh(x):
    return np.tanh(x)


_ACTIVATIONS = {"tanh": _tanh}


# ---------------------------------------------------------------------------
# Linear models
# ---------------------------------------------------------------------------


@dataclass
class LinearOperatorModel:
    """Bias-free linear map from length-M data vectors to density vectors.

    ``layout`` is "direct" (single M x M matrix) or "bottleneck"
    (three bias-free factors M -> M//d -> M//d -> M).
    """

    m: int
    layout: str = "direct"
    d: int = 1
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def identity(cls, m: int) -> "LinearOperatorModel":
        return cls(m=m, layout="direct", tensors={"w": np.eye(m)})

    @property
    def kind(self) -> str:
        return KIND_DIRECT if self.layout == "direct" else KIND_BOTTLENECK

    def matrix(self) -> np.ndarray:
        """The composite M x M map (materialized for analysis)."""
        if self.layout == "direct":
            return self.tensors["w"]
        t = self.tensors
        return t["w3"] @ t["w2"] @ t["w1"]

    def infer(self, g: np.ndarray, params: np.ndarray | None = None) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.m:
            raise ModelError(f"input length {g.shape[-1]} != model M {self.m}")
        if self.layout == "direct":
            return g @ self.tensors["w"].T
        t = self.tensors
        return ((g @ t["w1"].T) @ t["w2"].T) @ t["w3"].T


def fit_linear(
    g_data: np.ndarray,
    phi_data: np.ndarray,
    layout: str = "direct",
    d: int = 4,
    ridge: float = 0.0,
    max_sweeps: int = 200,
) -> LinearOperatorModel:
    """Least-squares fit of a linear operator model on (g, phi) pairs.

    The direct layout attains the global minimum of the summed squared
    loss (plus ridge) through the normal equations.  The bottleneck
    layout starts from the truncated SVD of the direct solution and is
    refined by alternating least squares with a monotone loss.
    """
    g_data = np.asarray(g_data, dtype=float)
    phi_data = np.asarray(phi_data, dtype=float)
    if g_data.ndim != 2 or g_data.shape != phi_data.shape:
        raise ModelError("expect matching (n, M) data arrays")
    if layout not in ("direct", "bottleneck"):
        raise ModelError(f"unknown layout {layout!r}")
    n, m = g_data.shape
    if n < m and ridge <= 0:
        log.warning("only %d pairs for M=%d: rank-deficient fit, consider ridge > 0", n, m)
    gram = g_data.T @ g_data + ridge * np.eye(m)
    w = np.linalg.solve(gram, g_data.T @ phi_data).T  # (M, M), phi ~ w @ g
    if layout == "direct":
        return LinearOperatorModel(m=m, layout="direct", tensors={"w": w})
    k = m // d
    if k < 1:
        raise ModelError("bottleneck width M//d must be at least 1")
    u, sv, vt = np.linalg.svd(w)
    w1 = vt[:k]  # (k, M)
    w2 = np.diag(sv[:k])  # (k, k)
    w3 = u[:, :k]  # (M, k)

    def loss(a, b, c):
        pred = g_data @ (a @ b @ c).T
        return float(np.sum((pred - phi_data) ** 2))

    def solve_two_sided(left, target, right):
        # min over X of ||left @ X.T @ right.T - target||_F
        x_t = np.linalg.lstsq(left, target, rcond=None)[0]
        x_t = np.linalg.lstsq(right.T @ right, right.T @ x_t.T, rcond=None)[0].T
        return x_t

    data_scale = max(float(np.sum(phi_data**2)), 1e-300)
    prev = loss(w3, w2, w1)
    for sweep in range(max_sweeps):
        # w1: pred = (g @ w1.T) @ (w3 @ w2).T
        w1 = solve_two_sided(g_data, phi_data, w3 @ w2).T
        # w2: pred = (g @ w1.T) @ w2.T @ w3.T
        w2 = solve_two_sided(g_data @ w1.T, phi_data, w3).T
        # w3: pred = (g @ (w2 @ w1).T) @ w3.T
        w3 = np.linalg.lstsq(g_data @ (w2 @ w1).T, phi_data, rcond=None)[0].T
        cur = loss(w3, w2, w1)
        if cur > prev * (1 + 1e-12) + 1e-12 * data_scale:
            raise AssertionError("alternating least squares increased the loss")
        if prev - cur <= 1e-12 * max(prev, 1e-14 * data_scale):
            break
        prev = cur
    return LinearOperatorModel(
        m=m, layout="bottleneck", d=d, tensors={"w1": w1, "w2": w2, "w3": w3}
    )


# ---------------------------------------------------------------------------
# Parameterized model
# ---------------------------------------------------------------------------


def _conv2d_same(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """2D convolution, stride 1, zero 'same' padding, channels-last.

    ``x`` is (H, W, Cin); ``kernel`` is (kh, kw, Cin, Cout) in the usual
    channels-last framework layout.
    """
    kh, kw, cin, cout = kernel.shape
    ph, pw = kh // 2, kw // 2
    xp = np.pad(x, ((ph, ph), (pw, pw), (0, 0)))
    h, w = x.shape[:2]
    out = np.empty((h, w, cout))
    patches = np.empty((h, w, kh * kw * cin))
    for dy in range(kh):
        for dx in range(kw):
            patches[:, :, (dy * kw + dx) * cin:(dy * kw + dx + 1) * cin] = xp[
                dy:dy + h, dx:dx + w, :
            ]
    out = patches @ kernel.reshape(kh * kw * cin, cout) + bias
    return out


@dataclass
class ParamOperatorModel:
    """Conv-modulated linear operator: density = head((A(p)) * (B g)).

    The parameter vector passes through a dense expansion, a reshape to
    a small feature image, two same-padded convolutions and a dense map,
    producing a modulation vector.  The data vector passes through a
    bias-free dense map.  Their elementwise product feeds a bias-free
    dense head, so for any fixed parameters the data-to-density map is
    linear.
    """

    m: int
    n_params: int
    preprocess_width: int = 32
    conv_grid: tuple[int, int] = (4, 8)
    conv_channels: int = 8
    conv_kernel: int = 3
    activation: str = "tanh"
    tensors: dict[str, np.ndarray] = field(default_factory=dict)

    kind = KIND_PARAM

    TENSOR_ORDER = (
        "pre_w", "pre_b", "conv1_k", "conv1_b", "conv2_k", "conv2_b",
        "param_dense_w", "param_dense_b", "lin_w", "head_w",
    )

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        gh, gw = self.conv_grid
        c = self.conv_channels
        k = self.conv_kernel
        return {
            "pre_w": (self.n_params, self.preprocess_width),
            "pre_b": (self.preprocess_width,),
            "conv1_k": (k, k, 1, c),
            "conv1_b": (c,),
            "conv2_k": (k, k, c, c),
            "conv2_b": (c,),
            "param_dense_w": (gh * gw * c, self.m),
            "param_dense_b": (self.m,),
            "lin_w": (self.m, self.m),
            "head_w": (self.m, self.m),
        }

    def validate(self):
        exp = self.expected_shapes()
        if self.preprocess_width != self.conv_grid[0] * self.conv_grid[1]:
            raise ModelError("preprocess width must equal conv grid size")
        for name, shape in exp.items():
            if name not in self.tensors:
                raise ModelError(f"missing tensor {name!r}")
            got = self.tensors[name].shape
            if tuple(got) != shape:
                raise ModelError(f"tensor {name!r} shape {got} != expected {shape}")

    def modulation(self, params: np.ndarray) -> np.ndarray:
        act = _ACTIVATIONS[self.activation]
        t = self.tensors
        p = np.asarray(params, dtype=float)
        if p.shape != (self.n_params,):
            raise ModelError(f"parameter vector shape {p.shape} != ({self.n_params},)")
        z = act(p @ t["pre_w"] + t["pre_b"])
        img = z.reshape(self.conv_grid[0], self.conv_grid[1], 1)
        img = act(_conv2d_same(img, t["conv1_k"], t["conv1_b"]))
        img = act(_conv2d_same(img, t["conv2_k"], t["conv2_b"]))
        return img.reshape(-1) @ t["param_dense_w"] + t["param_dense_b"]

    def infer(self, g: np.ndarray, params: np.ndarray) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if g.shape[-1] != self.m:
            raise ModelError(f"input length {g.shape[-1]} != model M {self.m}")
        t = self.tensors
        i1 = self.modulation(params)
        i2 = g @ t["lin_w"]
        return (i1 * i2) @ t["head_w"]


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------


def infer(model, g, params=None):
    """Uniform inference entry point for both model families."""
    if isinstance(model, ParamOperatorModel):
        if params is None:
            raise ModelError("parameterized model requires a parameter vector")
        return model.infer(g, params)
    return model.infer(g, params)


def _header_lines(model) -> tuple[list[str], list[tuple[str, np.ndarray]]]:
    lines = [MAGIC, f"kind {model.kind}", f"m {model.m}"]
    if isinstance(model, LinearOperatorModel):
        if model.layout == "bottleneck":
            lines.append(f"d {model.d}")
            order = ["w1", "w2", "w3"]
        else:
            order = ["w"]
    else:
        lines += [
            f"n_params {model.n_params}",
            f"preprocess_width {model.preprocess_width}",
            f"conv_grid {model.conv_grid[0]} {model.conv_grid[1]}",
            f"conv_channels {model.conv_channels}",
            f"conv_kernel {model.conv_kernel}",
            f"activation {model.activation}",
        ]
        order = list(model.TENSOR_ORDER)
    tensors = []
    for name in order:
        arr = np.ascontiguousarray(model.tensors[name], dtype="<f8")
        lines.append("tensor " + name + " " + " ".join(str(s) for s in arr.shape))
        tensors.append((name, arr))
    lines.append("end")
    return lines, tensors


def save_weights(model, path):
    if isinstance(model, ParamOperatorModel):
        model.validate()
    lines, tensors = _header_lines(model)
    with open(path, "wb") as fh:
        fh.write(("\n".join(lines) + "\n").encode("ascii"))
        for _, arr in tensors:
            fh.write(arr.tobytes())


def load_weights(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0 or blob[:nl].decode("ascii", "replace") != MAGIC:
        raise ModelError(f"{path}: not a {MAGIC} weights file")
    # header ends at the first 'end' line
    pos = nl + 1
    fields: dict[str, list[str]] = {}
    tensor_specs: list[tuple[str, tuple[int, ...]]] = []
    while True:
        nxt = blob.find(b"\n", pos)
        if nxt < 0:
            raise ModelError(f"{path}: truncated header")
        line = blob[pos:nxt].decode("ascii")
        pos = nxt + 1
        if line == "end":
            break
        parts = line.split()
        if not parts:
            continue
        if parts[0] == "tensor":
            tensor_specs.append((parts[1], tuple(int(s) for s in parts[2:])))
        else:
            fields[parts[0]] = parts[1:]

    def get_int(key, default=None):
        if key not in fields:
            if default is None:
                raise ModelError(f"{path}: missing header field {key!r}")
            return default
        return int(fields[key][0])

    tensors = {}
    for name, shape in tensor_specs:
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if pos + nbytes > len(blob):
            raise ModelError(f"{path}: truncated payload at tensor {name!r}")
        tensors[name] = np.frombuffer(blob[pos:pos + nbytes], dtype="<f8").reshape(shape).copy()
        pos += nbytes
    if pos != len(blob):
        raise ModelError(f"{path}: {len(blob) - pos} trailing bytes after payload")

    kind = fields.get("kind", [""])[0]
    m = get_int("m")
    if kind == KIND_DIRECT:
        model = LinearOperatorModel(m=m, layout="direct", tensors=tensors)
    elif kind == KIND_BOTTLENECK:
        model = LinearOperatorModel(m=m, layout="bottleneck", d=get_int("d"), tensors=tensors)
    elif kind == KIND_PARAM:
        grid = tuple(int(s) for s in fields["conv_grid"])
        model = ParamOperatorModel(
            m=m,
            n_params=get_int("n_params"),
            preprocess_width=get_int("preprocess_width", 32),
            conv_grid=grid,  # type: ignore[arg-type]
            conv_channels=get_int("conv_channels", 8),
            conv_kernel=get_int("conv_kernel", 3),
            activation=fields.get("activation", ["tanh"])[0],
            tensors=tensors,
        )
        model.validate()
    else:
        raise ModelError(f"{path}: unknown model kind {kind!r}")
    # shape sanity for linear kinds
    if isinstance(model, LinearOperatorModel):
        try:
            model.infer(np.zeros(m))
        except KeyError as exc:
            raise ModelError(f"{path}: missing tensor for kind {kind!r}: {exc}") from exc
    return model
