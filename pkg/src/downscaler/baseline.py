"""Per-site Bernoulli-Gamma CNN baseline.

A conv stack over the coarse predictors feeds three dense heads giving, for every
fine-grid site, the rain probability ``p`` and Gamma shape/scale. Sites are
sampled independently, which is what makes its fields spotty.
"""
from dataclasses import dataclass
import logging

import numpy as np

from . import nn
from .errors import ShapeError
from .special import digamma, lngamma, sample_gamma
from .training import TrainConfig, check_finite, minibatches

log = logging.getLogger(__name__)

POSITIVE_FLOOR = 1e-4
Y_LOG_FLOOR = 1e-6
DEFAULT_WET_THRESHOLD = 1.0


@dataclass(frozen=True)
class BaselineConfig:
    channels: int = 20
    coarse_h: int = 8
    coarse_w: int = 8
    scale: int = 4
    conv_widths: tuple = (50, 25, 10)
    wet_threshold: float = DEFAULT_WET_THRESHOLD

    @property
    def fine_h(self):
        return self.coarse_h * self.scale

    @property
    def fine_w(self):
        return self.coarse_w * self.scale


HEADS = ("head_p", "head_alpha", "head_beta")


def feature_layers(cfg):
    w = (cfg.channels,) + tuple(cfg.conv_widths)
    layers = []
    for i in range(len(cfg.conv_widths)):
        layers += [nn.conv2d(f"conv{i + 1}", w[i], w[i + 1]), nn.relu()]
    return layers + [nn.flatten()]


def head_layers(cfg):
    n_in = cfg.conv_widths[-1] * cfg.coarse_h * cfg.coarse_w
    n_out = cfg.fine_h * cfg.fine_w
    return [[nn.dense(name, n_in, n_out)] for name in HEADS]


@dataclass
class BaselineParams:
    config: BaselineConfig
    params: dict

    def __post_init__(self):
        self.features = feature_layers(self.config)
        self.heads = head_layers(self.config)

    @classmethod
    def initialize(cls, config, rng):
        params = nn.init_params(feature_layers(config), rng)
        for layers in head_layers(config):
            params.update(nn.init_params(layers, rng))
        return cls(config, params)

    def astype(self, dtype):
        return BaselineParams(self.config, {k: v.astype(dtype) for k, v in self.params.items()})


@dataclass(frozen=True)
class BernoulliGammaField:
    p: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        if not (np.all(self.p > 0) and np.all(self.p < 1)):
            raise ValueError("p must lie in (0, 1)")
        if not (np.all(self.alpha > 0) and np.all(self.beta > 0)):
            raise ValueError("alpha and beta must be positive")


def positive(a):
    return nn.softplus(a) + POSITIVE_FLOOR


def _logits(model, X):
    feats, inputs = nn.stack_forward(model.features, model.params, X)
    outs = [nn.stack_forward(h, model.params, feats) for h in model.heads]
    return feats, inputs, outs


def _check_x(X, cfg):
    want = (cfg.channels, cfg.coarse_h, cfg.coarse_w)
    for name, w, g in zip(("channels", "coarse height", "coarse width"), want, X.shape[1:]):
        if w != g:
            raise ShapeError(f"predictor {name}", w, g)
    if X.ndim != 4:
        raise ShapeError("predictor rank", 4, X.ndim)


def bg_forward_batch(X, model):
    X = np.asarray(X, dtype=np.float32)
    _check_x(X, model.config)
    _, _, outs = _logits(model, X)
    (ap, _), (aa, _), (ab, _) = outs
    shape = (-1, model.config.fine_h, model.config.fine_w)
    p = np.clip(nn.sigmoid(ap.astype(np.float64)), 1e-12, 1 - 1e-12)
    return p.reshape(shape), positive(aa).reshape(shape), positive(ab).reshape(shape)


def bg_forward(X, model):
    """Bernoulli-Gamma parameter maps for one predictor stack ``[C, H_c, W_c]``."""
    X = np.asarray(X, dtype=np.float32)
    if X.ndim != 3:
        raise ShapeError("predictor rank", 3, X.ndim)
    p, alpha, beta = bg_forward_batch(X[None], model)
    return BernoulliGammaField(p[0], alpha[0], beta[0])


def bg_nll(y, p, alpha, beta, wet_threshold=DEFAULT_WET_THRESHOLD):
    """Negative log-likelihood of ``y`` under the Bernoulli-Gamma mixture.

    Below ``wet_threshold`` the dry mass ``1 - p`` applies; otherwise ``p`` times the
    Gamma(alpha, scale=beta) density. Works element-wise on arrays.
    """
    y, p, alpha, beta = (np.asarray(v, dtype=np.float64) for v in (y, p, alpha, beta))
    if np.any(y < 0):
        raise ValueError("y must be >= 0")
    if not (np.all(p > 0) and np.all(p < 1)):
        raise ValueError("p must lie in (0, 1)")
    if not (np.all(alpha > 0) and np.all(beta > 0)):
        raise ValueError("alpha and beta must be positive")
    ylog = np.log(np.maximum(y, Y_LOG_FLOOR))
    wet = -(np.log(p) + (alpha - 1) * ylog - y / beta - alpha * np.log(beta) - lngamma(alpha))
    out = np.where(y < wet_threshold, -np.log1p(-p), wet)
    return out if out.ndim else float(out)


def bg_nll_grad(y, p, alpha, beta, wet_threshold=DEFAULT_WET_THRESHOLD):
    """Partial derivatives of :func:`bg_nll` w.r.t. ``(p, alpha, beta)``."""
    y, p, alpha, beta = (np.asarray(v, dtype=np.float64) for v in (y, p, alpha, beta))
    wet = y >= wet_threshold
    ylog = np.log(np.maximum(y, Y_LOG_FLOOR))
    dp = np.where(wet, -1 / p, 1 / (1 - p))
    da = np.where(wet, -ylog + np.log(beta) + digamma(alpha), 0.0)
    db = np.where(wet, -y / beta ** 2 + alpha / beta, 0.0)
    return dp, da, db


def nll_from_logits(y, ap, aa, ab, wet_threshold):
    """Per-site NLL and its gradients w.r.t. the three pre-activation maps.

    ``p = sigmoid(ap)``, ``alpha = softplus(aa) + floor``, ``beta = softplus(ab) + floor``.
    Log-probabilities go through log-sigmoid so extreme logits stay finite.
    """
    y, ap, aa, ab = (np.asarray(v, dtype=np.float64) for v in (y, ap, aa, ab))
    wet = y >= wet_threshold
    log_p = -nn.softplus(-ap)
    log_q = -nn.softplus(ap)
    p = nn.sigmoid(ap)
    alpha, beta = positive(aa), positive(ab)
    ylog = np.log(np.maximum(y, Y_LOG_FLOOR))
    nll_wet = -log_p - (alpha - 1) * ylog + y / beta + alpha * np.log(beta) + lngamma(alpha)
    nll = np.where(wet, nll_wet, -log_q)
    g_ap = np.where(wet, p - 1, p)
    g_aa = np.where(wet, (-ylog + np.log(beta) + digamma(alpha)) * nn.sigmoid(aa), 0.0)
    g_ab = np.where(wet, (-y / beta ** 2 + alpha / beta) * nn.sigmoid(ab), 0.0)
    return nll, (g_ap, g_aa, g_ab)


def nll_and_grads(model, X, Y):
    """Mean NLL over batch and sites, with gradients for every parameter."""
    params = model.params
    dtype = params["head_p.weight"].dtype
    X = np.asarray(X, dtype=dtype)
    _check_x(X, model.config)
    B = X.shape[0]
    y = np.asarray(Y, dtype=np.float64).reshape(B, -1)
    if y.shape[1] != model.config.fine_h * model.config.fine_w:
        raise ShapeError("predictand sites", model.config.fine_h * model.config.fine_w, y.shape[1])
    feats, feat_in, outs = _logits(model, X)
    nll, head_grads = nll_from_logits(y, *(o for o, _ in outs), model.config.wet_threshold)
    loss = float(np.mean(nll))
    scale = 1.0 / nll.size
    grads = {}
    g_feats = np.zeros_like(feats)
    for layers, (_, inputs), g in zip(model.heads, outs, head_grads):
        pg, gf = nn.stack_backward(layers, params, inputs, (g * scale).astype(dtype))
        grads.update(pg)
        g_feats += gf
    pg, _ = nn.stack_backward(model.features, params, feat_in, g_feats)
    grads.update(pg)
    return loss, grads


def train_baseline(data, config=None, train=None):
    """Fit on the training slice. Returns ``(BaselineParams, history)``."""
    config = config or BaselineConfig(channels=data.X.shape[1], coarse_h=data.X.shape[2],
                                      coarse_w=data.X.shape[3])
    train = (train or TrainConfig()).validate()
    X, Y = data.train()
    _check_x(X, config)
    if Y.shape[1:] != (config.fine_h, config.fine_w):
        raise ShapeError("predictand extents (H_f, W_f)", (config.fine_h, config.fine_w), Y.shape[1:])
    rng = np.random.default_rng(np.random.SeedSequence([train.seed, 202]))
    model = BaselineParams.initialize(config, rng)
    state = nn.AdamState()
    history = []
    for epoch in range(train.epochs):
        total = 0.0
        for b, idx in enumerate(minibatches(len(X), train.batch_size, rng)):
            loss, grads = nll_and_grads(model, X[idx], Y[idx])
            check_finite(loss, epoch, b)
            total += len(idx) * loss
            params, state = nn.adam_update(model.params, grads, state, train.lr,
                                           train.beta1, train.beta2, train.adam_eps)
            model = BaselineParams(config, params)
        history.append({"epoch": epoch, "nll": total / len(X)})
        log.info("baseline epoch %d nll=%.5f", epoch, total / len(X))
    return model, history


def sample_bg_field(field, stream):
    """One field: Bernoulli(p) occurrence, Gamma(alpha, scale=beta) amount if wet."""
    p = np.asarray(field.p, dtype=np.float64)
    wet = stream.random(p.shape) < p
    amount = sample_gamma(field.alpha, field.beta, stream)
    return np.where(wet, amount, 0.0).astype(np.float32)
