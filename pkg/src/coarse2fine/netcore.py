"""Minimal numpy neural-network core.

A model is a fixed stack of encoder layers followed by a linear predictor
head.  Parameters live in plain float32 numpy arrays; forward/backward are
written as im2col + GEMM so the whole thing runs at BLAS speed on CPU.

Supported encoder layers: 3x3 valid convolution, ReLU, 2x2 max pooling
(stride 2), flatten, and dense.  The predictor is always ``features @ W + b``
with ``W`` of shape (embedding_dim, num_classes); its columns double as class
embeddings for similarity metrics.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

DTYPE = np.float32


class ShapeError(ValueError):
    """Raised when tensor shapes do not line up with the model spec."""


# ---------------------------------------------------------------------------
# model specification
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Layer:
    """One encoder layer. kind in {conv3x3, relu, maxpool2x2, flatten, dense}."""

    kind: str
    # conv3x3: number of output channels; dense: number of output units
    units: int = 0


def conv3x3(channels: int) -> Layer:
    return Layer("conv3x3", channels)


def relu() -> Layer:
    return Layer("relu")


def maxpool2x2() -> Layer:
    return Layer("maxpool2x2")


def flatten() -> Layer:
    return Layer("flatten")


def dense(units: int) -> Layer:
    return Layer("dense", units)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture: input shape, encoder stack, and number of classes.

    ``input_shape`` is (H, W, C) for images or (D,) for flat vectors.
    """

    input_shape: tuple
    layers: tuple
    num_classes: int

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        if self.num_classes < 2:
            raise ShapeError(f"need at least 2 classes, got {self.num_classes}")
        # trace once at construction so bad stacks fail fast
        object.__setattr__(self, "_shapes", _trace_shapes(self))

    @property
    def feature_dim(self) -> int:
        """Dimension of the encoder output (the embedding fed to the predictor)."""
        shp = self._shapes[-1]
        if len(shp) != 1:
            raise ShapeError(
                f"encoder output shape {shp} is not flat; end the stack with flatten()"
            )
        return shp[0]

    def layer_shapes(self) -> list:
        """Per-layer output shapes (excluding batch dim), input first."""
        return list(self._shapes)


def _trace_shapes(spec: ModelSpec) -> tuple:
    """Propagate the input shape through the stack, validating each layer."""
    shapes = [tuple(spec.input_shape)]
    cur = shapes[0]
    for i, lay in enumerate(spec.layers):
        if lay.kind == "conv3x3":
            if len(cur) != 3:
                raise ShapeError(f"layer {i}: conv3x3 needs HWC input, got {cur}")
            h, w, _ = cur
            if h < 3 or w < 3:
                raise ShapeError(f"layer {i}: conv3x3 needs spatial dims >= 3, got {cur}")
            if lay.units < 1:
                raise ShapeError(f"layer {i}: conv3x3 needs >= 1 output channel")
            cur = (h - 2, w - 2, lay.units)
        elif lay.kind == "relu":
            pass
        elif lay.kind == "maxpool2x2":
            if len(cur) != 3:
                raise ShapeError(f"layer {i}: maxpool2x2 needs HWC input, got {cur}")
            h, w, c = cur
            if h < 2 or w < 2:
                raise ShapeError(f"layer {i}: maxpool2x2 needs spatial dims >= 2, got {cur}")
            cur = (h // 2, w // 2, c)
        elif lay.kind == "flatten":
            cur = (int(np.prod(cur)),)
        elif lay.kind == "dense":
            if len(cur) != 1:
                raise ShapeError(f"layer {i}: dense needs flat input, got {cur}")
            if lay.units < 1:
                raise ShapeError(f"layer {i}: dense needs >= 1 unit")
            cur = (lay.units,)
        else:
            raise ShapeError(f"layer {i}: unknown kind {lay.kind!r}")
        shapes.append(cur)
    if len(shapes[-1]) != 1:
        raise ShapeError(
            f"encoder must end with a flat shape, got {shapes[-1]}; add flatten()"
        )
    return tuple(shapes)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass
class ModelParams:
    """Encoder parameters (one dict per layer, empty for param-free layers)
    plus the predictor weights ``w`` (E, K) and bias ``b`` (K,)."""

    encoder: list
    w: np.ndarray
    b: np.ndarray


def init_params(spec: ModelSpec, seed: int) -> ModelParams:
    """Initialize weights uniform(-a, a) with a = sqrt(6 / fan_in); biases zero.

    Deterministic: the same (spec, seed) always produces identical arrays.
    """
    rng = np.random.default_rng(seed)
    shapes = spec.layer_shapes()
    encoder = []
    for i, lay in enumerate(spec.layers):
        if lay.kind == "conv3x3":
            cin = shapes[i][2]
            fan_in = 9 * cin
            a = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-a, a, size=(3, 3, cin, lay.units)).astype(DTYPE)
            encoder.append({"w": w, "b": np.zeros(lay.units, dtype=DTYPE)})
        elif lay.kind == "dense":
            fan_in = shapes[i][0]
            a = np.sqrt(6.0 / fan_in)
            w = rng.uniform(-a, a, size=(fan_in, lay.units)).astype(DTYPE)
            encoder.append({"w": w, "b": np.zeros(lay.units, dtype=DTYPE)})
        else:
            encoder.append({})
    e = spec.feature_dim
    a = np.sqrt(6.0 / e)
    w = rng.uniform(-a, a, size=(e, spec.num_classes)).astype(DTYPE)
    b = np.zeros(spec.num_classes, dtype=DTYPE)
    return ModelParams(encoder=encoder, w=w, b=b)


def clone_params(params: ModelParams) -> ModelParams:
    return ModelParams(
        encoder=[{k: v.copy() for k, v in lp.items()} for lp in params.encoder],
        w=params.w.copy(),
        b=params.b.copy(),
    )


def param_items(params: ModelParams):
    """Yield (name, array) for every parameter tensor, in a fixed order."""
    for i, lp in enumerate(params.encoder):
        for name, arr in lp.items():
            yield f"enc{i}.{name}", arr
    yield "pred.w", params.w
    yield "pred.b", params.b


# ---------------------------------------------------------------------------
# forward / backward
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray) -> np.ndarray:
    """(N,H,W,C) -> (N*(H-2)*(W-2), 9*C) patch matrix for a 3x3 valid conv.

    Column layout is (kh, kw, c) to match the (3,3,Cin,Cout) weight reshape.
    """
    n, h, w, c = x.shape
    win = np.lib.stride_tricks.sliding_window_view(x, (3, 3), axis=(1, 2))
    # win: (N, H-2, W-2, C, 3, 3) -> (N, H-2, W-2, 3, 3, C)
    win = win.transpose(0, 1, 2, 4, 5, 3)
    return np.ascontiguousarray(win).reshape(n * (h - 2) * (w - 2), 9 * c)


def _conv_forward(x, w, b):
    n, h, wd, _ = x.shape
    cols = _im2col(x)
    out = cols @ w.reshape(-1, w.shape[3])
    out += b
    return out.reshape(n, h - 2, wd - 2, w.shape[3]), cols


def _conv_backward(dy, cache, need_dx):
    x_shape, cols, w = cache
    n, h, wd, cin = x_shape
    cout = w.shape[3]
    dy2 = dy.reshape(-1, cout)
    dw = (cols.T @ dy2).reshape(3, 3, cin, cout)
    db = dy2.sum(axis=0)
    dx = None
    if need_dx:
        # full correlation: pad dY by 2 and convolve with the flipped kernel
        dyp = np.zeros((n, h + 2, wd + 2, cout), dtype=dy.dtype)
        dyp[:, 2:-2, 2:-2, :] = dy
        wflip = w[::-1, ::-1].transpose(0, 1, 3, 2)  # (3,3,Cout,Cin)
        cols_dy = _im2col(dyp)
        dx = (cols_dy @ wflip.reshape(-1, cin)).reshape(n, h, wd, cin)
    return dx, dw, db


def _pool_forward(x):
    n, h, w, c = x.shape
    hh, ww = h // 2, w // 2
    xx = x[:, : hh * 2, : ww * 2, :].reshape(n, hh, 2, ww, 2, c)
    xx = xx.transpose(0, 1, 3, 5, 2, 4).reshape(n, hh, ww, c, 4)
    # ties route to the first max in row-major window order
    idx = xx.argmax(axis=4)
    out = np.take_along_axis(xx, idx[..., None], axis=4)[..., 0]
    return out, idx


def _pool_backward(dy, idx, x_shape):
    n, h, w, c = x_shape
    hh, ww = h // 2, w // 2
    dxx = np.zeros((n, hh, ww, c, 4), dtype=dy.dtype)
    np.put_along_axis(dxx, idx[..., None], dy[..., None], axis=4)
    dxx = dxx.reshape(n, hh, ww, c, 2, 2).transpose(0, 1, 4, 2, 5, 3)
    dx = np.zeros((n, h, w, c), dtype=dy.dtype)
    dx[:, : hh * 2, : ww * 2, :] = dxx.reshape(n, hh * 2, ww * 2, c)
    return dx


def _encode(spec: ModelSpec, params: ModelParams, batch: np.ndarray, want_cache: bool):
    x = np.asarray(batch, dtype=DTYPE)
    if x.shape[1:] != spec.input_shape:
        raise ShapeError(
            f"batch shape {x.shape[1:]} does not match input shape {spec.input_shape}"
        )
    caches = []
    for lay, lp in zip(spec.layers, params.encoder):
        if lay.kind == "conv3x3":
            y, cols = _conv_forward(x, lp["w"], lp["b"])
            caches.append((x.shape, cols, lp["w"]) if want_cache else None)
            x = y
        elif lay.kind == "relu":
            mask = x > 0
            caches.append(mask if want_cache else None)
            x = np.where(mask, x, 0)
        elif lay.kind == "maxpool2x2":
            y, idx = _pool_forward(x)
            caches.append((idx, x.shape) if want_cache else None)
            x = y
        elif lay.kind == "flatten":
            caches.append(x.shape if want_cache else None)
            x = x.reshape(x.shape[0], -1)
        elif lay.kind == "dense":
            caches.append((x, lp["w"]) if want_cache else None)
            x = x @ lp["w"] + lp["b"]
    return x, caches


def forward(spec: ModelSpec, params: ModelParams, batch: np.ndarray, *, want_cache: bool = False):
    """Run the network on a batch.

    Parameters
    ----------
    batch : (N, *input_shape) array; converted to float32.
    want_cache : keep the intermediates needed by :func:`backward`.

    Returns
    -------
    logits : (N, num_classes) float32
    cache : opaque, or None when ``want_cache`` is false
    """
    feats, caches = _encode(spec, params, batch, want_cache)
    logits = feats @ params.w + params.b
    if not want_cache:
        return logits, None
    return logits, {"layers": caches, "feats": feats, "w": params.w}


def features(spec: ModelSpec, params: ModelParams, batch: np.ndarray,
             batch_size: int = 512) -> np.ndarray:
    """Encoder output (the embedding) without the predictor head."""
    out = [
        _encode(spec, params, batch[s : s + batch_size], False)[0]
        for s in range(0, batch.shape[0], batch_size)
    ]
    return np.concatenate(out, axis=0)


def backward(spec: ModelSpec, params: ModelParams, cache: dict, dlogits: np.ndarray) -> ModelParams:
    """Backpropagate ``dlogits`` through the cached forward pass.

    Returns gradients in a ModelParams-shaped container (same array shapes).
    The input gradient at the first layer is never materialized.
    """
    feats = cache["feats"]
    dw_pred = feats.T @ dlogits
    db_pred = dlogits.sum(axis=0)
    dx = dlogits @ cache["w"].T
    grads = [None] * len(spec.layers)
    for i in range(len(spec.layers) - 1, -1, -1):
        lay = spec.layers[i]
        c = cache["layers"][i]
        need_dx = i > 0
        if lay.kind == "conv3x3":
            dx, dw, db = _conv_backward(dx, c, need_dx)
            grads[i] = {"w": dw, "b": db}
        elif lay.kind == "relu":
            dx = np.where(c, dx, 0)
            grads[i] = {}
        elif lay.kind == "maxpool2x2":
            idx, x_shape = c
            dx = _pool_backward(dx, idx, x_shape)
            grads[i] = {}
        elif lay.kind == "flatten":
            dx = dx.reshape(c)
            grads[i] = {}
        elif lay.kind == "dense":
            x_in, w = c
            grads[i] = {"w": x_in.T @ dx, "b": dx.sum(axis=0)}
            if need_dx:
                dx = dx @ w.T
    return ModelParams(encoder=grads, w=dw_pred, b=db_pred)


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def logsumexp_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise log(sum(exp)), max-shifted.  Shared by every loss here so that
    algebraically-equal losses agree to the last ulp."""
    m = z.max(axis=1, keepdims=True)
    return (m + np.log(np.exp(z - m).sum(axis=1, keepdims=True)))[:, 0]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy and dlogits for integer labels.

    Computation stays in the dtype of ``logits`` (float64 in, float64 out).
    """
    z = np.asarray(logits)
    y = np.asarray(labels)
    n, k = z.shape
    if y.shape != (n,):
        raise ShapeError(f"labels shape {y.shape} does not match batch {n}")
    if y.size and (y.min() < 0 or y.max() >= k):
        raise ShapeError(f"labels out of range [0, {k})")
    lse = logsumexp_rows(z)
    losses = lse - z[np.arange(n), y]
    p = np.exp(z - lse[:, None])
    dlogits = p.copy()
    dlogits[np.arange(n), y] -= 1
    dlogits /= n
    return float(losses.mean()), dlogits.astype(z.dtype, copy=False)


def predict(logits: np.ndarray) -> np.ndarray:
    """Argmax class per row; ties resolve to the lowest class id."""
    return np.argmax(logits, axis=1)


def evaluate(spec: ModelSpec, params: ModelParams, x: np.ndarray, y: np.ndarray,
             batch_size: int = 512) -> float:
    """Accuracy of argmax predictions over ``x`` against integer labels ``y``."""
    n = x.shape[0]
    if n == 0:
        return float("nan")
    hits = 0
    for s in range(0, n, batch_size):
        logits, _ = forward(spec, params, x[s : s + batch_size])
        hits += int((predict(logits) == y[s : s + batch_size]).sum())
    return hits / n


# ---------------------------------------------------------------------------
# optimizers
# ---------------------------------------------------------------------------

@dataclass
class OptimizerState:
    """SGD-with-momentum or Adam state.  ``fresh()`` returns a zeroed copy
    with the same hyperparameters (used at curriculum level boundaries)."""

    kind: str  # "sgd" | "adam"
    lr: float = 0.001
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    step_count: int = 0
    slots: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("sgd", "adam"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")

    def fresh(self) -> "OptimizerState":
        return dataclasses.replace(self, step_count=0, slots={})


def sgd(lr: float, momentum: float = 0.9, weight_decay: float = 0.0) -> OptimizerState:
    return OptimizerState(kind="sgd", lr=lr, momentum=momentum, weight_decay=weight_decay)


def adam(lr: float = 0.001, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
         weight_decay: float = 0.0) -> OptimizerState:
    return OptimizerState(kind="adam", lr=lr, beta1=beta1, beta2=beta2, eps=eps,
                          weight_decay=weight_decay)


def apply_gradients(params: ModelParams, grads: ModelParams, state: OptimizerState):
    """One optimizer step, in place.  Returns (params, state) for chaining."""
    pairs = list(zip(param_items(params), param_items(grads)))
    for (name, p), (gname, g) in pairs:
        if name != gname or p.shape != g.shape:
            raise ShapeError(f"gradient {gname}{g.shape} does not match param {name}{p.shape}")
    state.step_count += 1
    t = state.step_count
    for (name, p), (_, g) in pairs:
        if state.weight_decay:
            g = g + state.weight_decay * p
        if state.kind == "sgd":
            buf = state.slots.get(name)
            if buf is None:
                buf = np.zeros_like(p)
                state.slots[name] = buf
            buf *= state.momentum
            buf += g
            p -= state.lr * buf
        else:  # adam
            slot = state.slots.get(name)
            if slot is None:
                slot = {"m": np.zeros_like(p), "v": np.zeros_like(p)}
                state.slots[name] = slot
            m, v = slot["m"], slot["v"]
            m *= state.beta1
            m += (1.0 - state.beta1) * g
            v *= state.beta2
            v += (1.0 - state.beta2) * np.square(g)
            mhat = m / (1.0 - state.beta1 ** t)
            vhat = v / (1.0 - state.beta2 ** t)
            p -= (state.lr * mhat / (np.sqrt(vhat) + state.eps)).astype(p.dtype, copy=False)
    return params, state
