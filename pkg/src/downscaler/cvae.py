"""Conditional variational auto-encoder for stochastic downscaling.

Three networks: an embedding net maps coarse predictors to ``z_x``; an encoder
maps (fine precipitation, ``z_x``) to a diagonal Gaussian over ``z``; a decoder
maps (``z``, ``z_x``) to a fine field in log1p space. Training runs the encoder
path; inference draws ``z`` from N(0, I) and never sees the target field.
"""
from dataclasses import dataclass, field
import logging

import numpy as np

from . import nn
from .errors import ShapeError
from .training import TrainConfig, check_finite, kl_weight, minibatches

log = logging.getLogger(__name__)

LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


@dataclass(frozen=True)
class CvaeConfig:
    channels: int = 20
    coarse_h: int = 8
    coarse_w: int = 8
    scale: int = 4
    d_z: int = 16
    d_zx: int = 128
    embed_widths: tuple = (50, 25, 10)
    encoder_widths: tuple = (16, 8)
    decoder_base: int = 8
    decoder_widths: tuple = (8, 4)

    def __post_init__(self):
        if self.d_z < 1 or self.d_zx < 1:
            raise ValueError("d_z and d_zx must be >= 1")
        if 2 ** len(self.decoder_widths) != self.scale:
            raise ValueError("decoder needs log2(scale) upsampling stages")

    @property
    def fine_h(self):
        return self.coarse_h * self.scale

    @property
    def fine_w(self):
        return self.coarse_w * self.scale


def embedding_layers(cfg):
    w = (cfg.channels,) + tuple(cfg.embed_widths)
    layers = []
    for i in range(len(cfg.embed_widths)):
        layers += [nn.conv2d(f"embed.conv{i + 1}", w[i], w[i + 1]), nn.relu()]
    layers += [nn.flatten(), nn.dense("embed.out", w[-1] * cfg.coarse_h * cfg.coarse_w, cfg.d_zx)]
    return layers


def encoder_layers(cfg):
    w = (1,) + tuple(cfg.encoder_widths)
    layers = []
    for i in range(len(cfg.encoder_widths)):
        layers += [nn.conv2d(f"enc.conv{i + 1}", w[i], w[i + 1]), nn.relu()]
    return layers + [nn.flatten()]


def _encoder_features(cfg):
    return cfg.encoder_widths[-1] * cfg.fine_h * cfg.fine_w


def head_layers(cfg):
    n_in = _encoder_features(cfg) + cfg.d_zx
    return [nn.dense("enc.mu", n_in, cfg.d_z)], [nn.dense("enc.logvar", n_in, cfg.d_z)]


def decoder_layers(cfg):
    b = cfg.decoder_base
    layers = [nn.dense("dec.in", cfg.d_z + cfg.d_zx, b * cfg.coarse_h * cfg.coarse_w),
              nn.relu(), nn.reshape(b, cfg.coarse_h, cfg.coarse_w)]
    w = (b,) + tuple(cfg.decoder_widths)
    for i in range(len(cfg.decoder_widths)):
        layers += [nn.upsample(2), nn.conv2d(f"dec.conv{i + 1}", w[i], w[i + 1]), nn.relu()]
    return layers + [nn.conv2d("dec.out", w[-1], 1, kernel=1), nn.flatten()]


@dataclass
class CvaeParams:
    config: CvaeConfig
    params: dict

    def __post_init__(self):
        self.embed = embedding_layers(self.config)
        self.encoder = encoder_layers(self.config)
        self.mu_head, self.logvar_head = head_layers(self.config)
        self.decoder = decoder_layers(self.config)

    @classmethod
    def initialize(cls, config, rng):
        params = {}
        for layers in (embedding_layers(config), encoder_layers(config),
                       *head_layers(config), decoder_layers(config)):
            params.update(nn.init_params(layers, rng))
        return cls(config, params)

    def astype(self, dtype):
        return CvaeParams(self.config, {k: v.astype(dtype) for k, v in self.params.items()})


@dataclass(frozen=True)
class GaussianLatent:
    mu: np.ndarray
    logvar: np.ndarray

    @property
    def sigma(self):
        return np.exp(0.5 * self.logvar)


@dataclass(frozen=True)
class LatentSample:
    z: np.ndarray
    stream_id: object = None


@dataclass(frozen=True)
class PredictorEmbedding:
    z_x: np.ndarray


def _check_x(X, cfg, batched):
    want = (cfg.channels, cfg.coarse_h, cfg.coarse_w)
    got = X.shape[1:] if batched else X.shape
    if len(got) != 3:
        raise ShapeError("predictor rank", 4 if batched else 3, X.ndim)
    for name, w, g in zip(("channels", "coarse height", "coarse width"), want, got):
        if w != g:
            raise ShapeError(f"predictor {name}", w, g)


def _check_y(Y, cfg, batched):
    want = (cfg.fine_h, cfg.fine_w)
    got = Y.shape[1:] if batched else Y.shape
    if tuple(got) != want:
        raise ShapeError("predictand extents (H_f, W_f)", want, tuple(got))


def _embed(model, X):
    return nn.stack_forward(model.embed, model.params, X)


def embed_predictors(X, model):
    X = np.asarray(X, dtype=np.float32)
    _check_x(X, model.config, batched=False)
    zx, _ = _embed(model, X[None])
    return PredictorEmbedding(zx[0])


def _clamp(logvar):
    return np.clip(logvar, LOGVAR_MIN, LOGVAR_MAX)


def encode(z_x, Y, model):
    """Posterior parameters for one (embedding, fine field) pair."""
    Y = np.asarray(Y, dtype=np.float32)
    _check_y(Y, model.config, batched=False)
    if np.any(Y < 0):
        raise ValueError("precipitation must be nonnegative")
    zx = np.asarray(z_x.z_x)[None]
    if zx.shape[1] != model.config.d_zx:
        raise ShapeError("embedding length d_zx", model.config.d_zx, zx.shape[1])
    h, _ = nn.stack_forward(model.encoder, model.params, np.log1p(Y)[None, None])
    h = nn.concat(h, zx.astype(h.dtype))
    mu, _ = nn.stack_forward(model.mu_head, model.params, h)
    lv, _ = nn.stack_forward(model.logvar_head, model.params, h)
    return GaussianLatent(mu[0], _clamp(lv[0]))


def reparameterize(lat, eps):
    return LatentSample(lat.mu + lat.sigma * np.asarray(eps, dtype=lat.mu.dtype))


def kl_divergence(lat):
    """KL(N(mu, sigma^2) || N(0, I)) summed over latent dimensions."""
    mu = np.asarray(lat.mu, dtype=np.float64)
    lv = np.asarray(lat.logvar, dtype=np.float64)
    return float(0.5 * np.sum(mu * mu + np.expm1(lv) - lv))


def to_physical(transformed):
    return np.maximum(np.expm1(transformed), 0).astype(np.float32)


def _decode_batch(model, z, zx):
    out, _ = nn.stack_forward(model.decoder, model.params, nn.concat(z, zx))
    return out.reshape(-1, model.config.fine_h, model.config.fine_w)


def decode(z, z_x, model, transformed=False):
    """Decode one latent sample; physical mm/day unless ``transformed``."""
    cfg = model.config
    zv = np.asarray(getattr(z, "z", z), dtype=np.float32).reshape(1, -1)
    zx = np.asarray(getattr(z_x, "z_x", z_x), dtype=np.float32).reshape(1, -1)
    if zv.shape[1] != cfg.d_z:
        raise ShapeError("latent length d_z", cfg.d_z, zv.shape[1])
    if zx.shape[1] != cfg.d_zx:
        raise ShapeError("embedding length d_zx", cfg.d_zx, zx.shape[1])
    out = _decode_batch(model, zv, zx)[0]
    return out if transformed else to_physical(out)


def elbo_loss(Y, Y_hat, lat, beta_kl):
    """``(total, recon, kl)``; ``Y_hat`` is the decoder output in log1p space."""
    Y = np.asarray(Y, dtype=np.float64)
    Y_hat = np.asarray(Y_hat, dtype=np.float64)
    if Y.shape != Y_hat.shape:
        raise ShapeError("reconstruction shape", Y.shape, Y_hat.shape)
    if beta_kl < 0:
        raise ValueError("beta_kl must be >= 0")
    recon = float(np.mean((np.log1p(Y) - Y_hat) ** 2))
    kl = kl_divergence(lat)
    return recon + beta_kl * kl, recon, kl


def elbo_and_grads(model, X, Y, eps, beta_kl):
    """Batch-mean ELBO terms and exact gradients for every parameter.

    ``X``: [B, C, H_c, W_c]; ``Y``: [B, H_f, W_f] (mm/day); ``eps``: [B, d_z].
    """
    cfg, params = model.config, model.params
    dtype = params["embed.out.weight"].dtype
    X = np.asarray(X, dtype=dtype)
    target = np.log1p(np.asarray(Y, dtype=dtype))
    B = X.shape[0]
    _check_x(X, cfg, batched=True)
    _check_y(target, cfg, batched=True)

    zx, emb_in = nn.stack_forward(model.embed, params, X)
    hconv, enc_in = nn.stack_forward(model.encoder, params, target[:, None])
    h = nn.concat(hconv, zx)
    mu, mu_in = nn.stack_forward(model.mu_head, params, h)
    lv_raw, lv_in = nn.stack_forward(model.logvar_head, params, h)
    lv = _clamp(lv_raw)
    sigma = np.exp(0.5 * lv)
    eps = np.asarray(eps, dtype=dtype)
    z = mu + sigma * eps
    out, dec_in = nn.stack_forward(model.decoder, params, nn.concat(z, zx))

    diff = out - target.reshape(B, -1)
    P = diff.shape[1]
    recon = float(np.mean(np.mean(diff.astype(np.float64) ** 2, axis=1)))
    kl_terms = mu * mu + np.expm1(lv) - lv
    kl = float(np.mean(0.5 * np.sum(kl_terms.astype(np.float64), axis=1)))
    total = recon + beta_kl * kl

    g_out = (2.0 / (P * B)) * diff
    grads, g_dec_in = nn.stack_backward(model.decoder, params, dec_in, g_out)
    g_z, g_zx = nn.split_grad(g_dec_in, cfg.d_z)
    g_mu = g_z + (beta_kl / B) * mu
    inside = (lv_raw >= LOGVAR_MIN) & (lv_raw <= LOGVAR_MAX)
    g_lv = (g_z * 0.5 * sigma * eps + (beta_kl / B) * 0.5 * (np.exp(lv) - 1)) * inside
    g_mu_p, g_h = nn.stack_backward(model.mu_head, params, mu_in, g_mu.astype(dtype))
    g_lv_p, g_h2 = nn.stack_backward(model.logvar_head, params, lv_in, g_lv.astype(dtype))
    grads.update(g_mu_p)
    grads.update(g_lv_p)
    g_hconv, g_zx2 = nn.split_grad(g_h + g_h2, hconv.shape[1])
    g_enc, _ = nn.stack_backward(model.encoder, params, enc_in, g_hconv)
    grads.update(g_enc)
    g_emb, _ = nn.stack_backward(model.embed, params, emb_in, g_zx + g_zx2)
    grads.update(g_emb)
    return (total, recon, kl), grads


def train_cvae(data, config=None, train=None):
    """Fit on the training slice. Returns ``(CvaeParams, history)``.

    ``history`` holds one dict per epoch with the batch-weighted mean
    ``total``, ``recon`` and ``kl`` and the epoch's KL weight.
    """
    config = config or CvaeConfig(channels=data.X.shape[1], coarse_h=data.X.shape[2],
                                  coarse_w=data.X.shape[3])
    train = (train or TrainConfig()).validate()
    X, Y = data.train()
    _check_x(X, config, batched=True)
    _check_y(Y, config, batched=True)
    rng = np.random.default_rng(np.random.SeedSequence([train.seed, 101]))
    model = CvaeParams.initialize(config, rng)
    state = nn.AdamState()
    history = []
    for epoch in range(train.epochs):
        beta = kl_weight(epoch, train)
        sums = np.zeros(3)
        for b, idx in enumerate(minibatches(len(X), train.batch_size, rng)):
            eps = rng.standard_normal((len(idx), config.d_z)).astype(np.float32)
            (total, recon, kl), grads = elbo_and_grads(model, X[idx], Y[idx], eps, beta)
            check_finite(total, epoch, b)
            sums += len(idx) * np.array([total, recon, kl])
            params, state = nn.adam_update(model.params, grads, state, train.lr,
                                           train.beta1, train.beta2, train.adam_eps)
            model = CvaeParams(config, params)
        total, recon, kl = sums / len(X)
        history.append({"epoch": epoch, "beta_kl": beta, "total": total,
                        "recon": recon, "kl": kl})
        log.info("cvae epoch %d beta=%.3f total=%.5f recon=%.5f kl=%.5f",
                 epoch, beta, total, recon, kl)
    return model, history


def sample_downscaled(X, model, n, stream):
    """Draw ``n`` fields for one predictor stack from the N(0, I) prior path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    X = np.asarray(X, dtype=np.float32)
    _check_x(X, model.config, batched=False)
    zx, _ = _embed(model, X[None])
    z = stream.standard_normal((n, model.config.d_z)).astype(np.float32)
    out = _decode_batch(model, z, np.repeat(zx, n, axis=0))
    return [to_physical(f) for f in out]
