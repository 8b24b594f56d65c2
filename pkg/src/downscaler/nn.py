"""Small numerical layer set with hand-written reverse-mode gradients.

Arrays carry a leading batch axis inside layer stacks. Stacks are plain lists of
:class:`LayerSpec`; parameters live in a flat ``{name: array}`` dict keyed
``"<layer name>.weight"`` / ``"<layer name>.bias"``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError

DTYPE = np.float32

LAYER_KINDS = ("conv2d", "dense", "relu", "softplus", "sigmoid", "flatten",
               "reshape", "upsample")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    name: str = ""
    in_channels: int = 0
    out_channels: int = 0
    kernel: int = 0
    padding: str = "same"
    in_features: int = 0
    out_features: int = 0
    shape: tuple = ()
    factor: int = 2

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.kind == "conv2d":
            if self.kernel < 1 or self.kernel % 2 == 0:
                raise ValueError(f"conv2d kernel extent must be odd, got {self.kernel}")
            if self.padding not in ("same", "valid"):
                raise ValueError(f"padding must be 'same' or 'valid', got {self.padding!r}")
        if self.kind == "dense" and (self.in_features < 1 or self.out_features < 1):
            raise ValueError("dense widths must be positive")

    @property
    def pad(self):
        return self.kernel // 2 if self.padding == "same" else 0


def conv2d(name, in_channels, out_channels, kernel=3, padding="same"):
    return LayerSpec("conv2d", name, in_channels=in_channels, out_channels=out_channels,
                     kernel=kernel, padding=padding)


def dense(name, in_features, out_features):
    return LayerSpec("dense", name, in_features=in_features, out_features=out_features)


def relu():
    return LayerSpec("relu")


def softplus_layer():
    return LayerSpec("softplus")


def sigmoid_layer():
    return LayerSpec("sigmoid")


def flatten():
    return LayerSpec("flatten")


def reshape(*shape):
    return LayerSpec("reshape", shape=tuple(shape))


def upsample(factor=2):
    return LayerSpec("upsample", factor=factor)


# -- element-wise activations ------------------------------------------------

def relu_fn(x):
    return np.maximum(x, 0)


def softplus(x):
    # max(t, 0) + log1p(exp(-|t|)) never overflows
    return np.maximum(x, 0) + np.log1p(np.exp(-np.abs(x)))


def sigmoid(x):
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1 / (1 + e), e / (1 + e)).astype(np.result_type(x), copy=False)


def activation(x, kind):
    """Apply ``relu``, ``softplus`` or ``sigmoid`` element-wise."""
    if kind == "relu":
        return relu_fn(x)
    if kind == "softplus":
        return softplus(x)
    if kind == "sigmoid":
        return sigmoid(x)
    raise ValueError(f"unknown activation {kind!r}")


# -- single-sample primitives --------------------------------------------------

def conv2d_forward(x, kernel, bias, padding="same"):
    """Cross-correlate a ``[C_in, H, W]`` input with ``[C_out, C_in, k, k]`` kernels."""
    x = np.asarray(x)
    if x.ndim != 3:
        raise ShapeError("input rank", 3, x.ndim)
    spec = conv2d("", x.shape[0], kernel.shape[0], kernel.shape[2], padding)
    out = _conv_fwd(spec, {".weight": kernel, ".bias": bias}, x[None])
    return out[0]


def dense_forward(x, weights, bias):
    x = np.asarray(x)
    spec = dense("", weights.shape[1], weights.shape[0])
    return _dense_fwd(spec, {".weight": weights, ".bias": bias}, x[None])[0]


# -- stack forward / backward --------------------------------------------------

def _param(params, layer, which):
    return params[f"{layer.name}.{which}"]


def _conv_fwd(layer, params, x):
    w, b = _param(params, layer, "weight"), _param(params, layer, "bias")
    if x.ndim != 4:
        raise ShapeError(f"{layer.name or 'conv2d'} input rank", 4, x.ndim)
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"{layer.name or 'conv2d'} input channels", w.shape[1], x.shape[1])
    if w.shape[2] != w.shape[3] or w.shape[2] % 2 == 0:
        raise ShapeError(f"{layer.name or 'conv2d'} kernel extent", "odd square", w.shape[2:])
    if b.shape != (w.shape[0],):
        raise ShapeError(f"{layer.name or 'conv2d'} bias length", w.shape[0], b.shape)
    if layer.padding == "valid":
        k = w.shape[2]
        if x.shape[2] < k or x.shape[3] < k:
            raise ShapeError(f"{layer.name or 'conv2d'} spatial extent", f">= {k}", x.shape[2:])
    return kernels.conv2d_forward(x, w, b, layer.pad)


def _dense_fwd(layer, params, x):
    w, b = _param(params, layer, "weight"), _param(params, layer, "bias")
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise ShapeError(f"{layer.name or 'dense'} input width", w.shape[1], x.shape[1:])
    if b.shape != (w.shape[0],):
        raise ShapeError(f"{layer.name or 'dense'} bias length", w.shape[0], b.shape)
    return x @ w.T + b


def _upsample_fwd(layer, x):
    f = layer.factor
    return x.repeat(f, axis=2).repeat(f, axis=3)


def layer_forward(layer, params, x):
    kind = layer.kind
    if kind == "conv2d":
        return _conv_fwd(layer, params, x)
    if kind == "dense":
        return _dense_fwd(layer, params, x)
    if kind in ("relu", "softplus", "sigmoid"):
        return activation(x, kind)
    if kind == "flatten":
        return x.reshape(x.shape[0], -1)
    if kind == "reshape":
        if int(np.prod(x.shape[1:])) != int(np.prod(layer.shape)):
            raise ShapeError("reshape size", int(np.prod(layer.shape)), int(np.prod(x.shape[1:])))
        return x.reshape((x.shape[0],) + layer.shape)
    if kind == "upsample":
        return _upsample_fwd(layer, x)
    raise ValueError(kind)


def layer_backward(layer, params, x, g):
    """Return ``(param_grads, grad_input)`` for one layer given its input ``x``."""
    kind = layer.kind
    if kind == "conv2d":
        w = _param(params, layer, "weight")
        gx, gw, gb = kernels.conv2d_backward(x, w, g, layer.pad)
        return {f"{layer.name}.weight": gw, f"{layer.name}.bias": gb}, gx
    if kind == "dense":
        w = _param(params, layer, "weight")
        return {f"{layer.name}.weight": g.T @ x, f"{layer.name}.bias": g.sum(axis=0)}, g @ w
    if kind == "relu":
        return {}, g * (x > 0)
    if kind == "softplus":
        return {}, g * sigmoid(x)
    if kind == "sigmoid":
        s = sigmoid(x)
        return {}, g * s * (1 - s)
    if kind in ("flatten", "reshape"):
        return {}, g.reshape(x.shape)
    if kind == "upsample":
        f = layer.factor
        n, c, h, w = x.shape
        return {}, g.reshape(n, c, h, f, w, f).sum(axis=(3, 5))
    raise ValueError(kind)


def stack_forward(layers, params, x):
    """Run a layer stack; returns the output and the per-layer inputs for backward."""
    inputs = []
    for layer in layers:
        inputs.append(x)
        x = layer_forward(layer, params, x)
    return x, inputs


def stack_backward(layers, params, inputs, upstream):
    grads = {}
    g = upstream
    for layer, x in zip(reversed(layers), reversed(inputs)):
        pg, g = layer_backward(layer, params, x, g)
        grads.update(pg)
    return grads, g


def network_backward(layers, params, x, upstream):
    """Exact gradients of ``stack_forward`` w.r.t. parameters and input."""
    out, inputs = stack_forward(layers, params, x)
    if out.shape != np.shape(upstream):
        raise ShapeError("upstream gradient shape", out.shape, np.shape(upstream))
    return stack_backward(layers, params, inputs, np.asarray(upstream, dtype=out.dtype))


def concat(a, b):
    """Join two batched feature vectors along the feature axis."""
    return np.concatenate([a, b], axis=1)


def split_grad(g, n_first):
    return g[:, :n_first], g[:, n_first:]


def init_params(layers, rng, dtype=DTYPE):
    """He-normal weights, zero biases, drawn in layer order."""
    params = {}
    for layer in layers:
        if layer.kind == "conv2d":
            fan_in = layer.in_channels * layer.kernel ** 2
            shape = (layer.out_channels, layer.in_channels, layer.kernel, layer.kernel)
            n_out = layer.out_channels
        elif layer.kind == "dense":
            fan_in = layer.in_features
            shape = (layer.out_features, layer.in_features)
            n_out = layer.out_features
        else:
            continue
        w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[f"{layer.name}.weight"] = w.astype(dtype)
        params[f"{layer.name}.bias"] = np.zeros(n_out, dtype=dtype)
    return params


# -- optimizer ------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0


def adam_update(params, grads, state, lr=1e-4, beta1=0.9, beta2=0.999, eps=1e-8):
    """One bias-corrected Adam step. Returns new ``(params, state)``; inputs untouched."""
    if not lr > 0:
        raise ValueError("lr must be positive")
    if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
        raise ValueError("beta1 and beta2 must lie in [0, 1)")
    for name in sorted(grads):
        if not np.all(np.isfinite(grads[name])):
            raise NumericError(f"non-finite gradient for {name!r} at step {state.step + 1}")
    step = state.step + 1
    c1 = 1 - beta1 ** step
    c2 = 1 - beta2 ** step
    new_params, m_new, v_new = {}, {}, {}
    for name in sorted(params):
        p = params[name]
        g = grads.get(name)
        if g is None:
            new_params[name] = p
            continue
        if g.shape != p.shape:
            raise ShapeError(f"gradient {name}", p.shape, g.shape)
        m = state.m.get(name, np.zeros_like(p))
        v = state.v.get(name, np.zeros_like(p))
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * (g * g)
        new_params[name] = (p - lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(p.dtype)
        m_new[name], v_new[name] = m.astype(p.dtype), v.astype(p.dtype)
    return new_params, AdamState(m_new, v_new, step)


# -- gradient checking ------------------------------------------------------------

def finite_difference_check(f, point, eps=1e-3, coords=None):
    """Max relative error between ``f``'s analytic gradient and central differences.

    ``f(x)`` returns ``(value, grad)``. ``coords`` optionally restricts the check to
    a subset of flat indices.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    x = np.array(point, dtype=np.result_type(np.asarray(point), np.float32), copy=True)
    _, grad = f(x)
    grad = np.asarray(grad, dtype=np.float64).reshape(-1)
    flat = x.reshape(-1)
    idx = range(flat.size) if coords is None else coords
    worst = 0.0
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f(x)[0])
        flat[i] = orig - eps
        fm = float(f(x)[0])
        flat[i] = orig
        num = (fp - fm) / (2 * eps)
        err = abs(grad[i] - num) / max(abs(grad[i]), abs(num), 1e-8)
        worst = max(worst, err)
    return worst
