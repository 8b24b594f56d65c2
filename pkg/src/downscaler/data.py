"""Synthetic predictor/predictand pairs with a 4x resolution gap.

Each day draws a fine-grid latent weather state: a domain-wide wetness offset, a
large-scale random field and a fine-scale random field. Precipitation is a
zero-inflated, heavy-tailed transform of that state. Twenty coarse predictor
channels are block means of smooth transforms of the state plus channel noise,
so they carry information about the day without pinning down the local rain.
"""
import dataclasses
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, ShapeError

N_VARIABLES = 5
N_LEVELS = 4


@dataclass(frozen=True)
class SynthConfig:
    n_times: int = 2000
    channels: int = 20
    coarse_h: int = 8
    coarse_w: int = 8
    scale: int = 4
    large_corr_length: float = 6.0
    fine_corr_length: float = 2.0
    daily_std: float = 0.6
    large_weight: float = 0.2
    fine_weight: float = 0.7
    wet_shift: float = 0.0
    intensity: float = 1.2
    predictor_noise: float = 1.0
    noise_corr_length: float = 1.0
    train_fraction: float = 0.8
    seed: int = 1234

    @property
    def fine_h(self):
        return self.coarse_h * self.scale

    @property
    def fine_w(self):
        return self.coarse_w * self.scale

    @property
    def split_index(self):
        return int(np.floor(self.train_fraction * self.n_times))

    def validate(self):
        if self.n_times < 2:
            raise ConfigError(f"n_times must be >= 2, got {self.n_times}")
        for name in ("channels", "coarse_h", "coarse_w", "scale"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("large_corr_length", "fine_corr_length", "noise_corr_length",
                     "daily_std", "large_weight", "fine_weight", "predictor_noise"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.intensity <= 0:
            raise ConfigError(f"intensity must be > 0, got {self.intensity}")
        if not 0 < self.split_index < self.n_times:
            raise ConfigError(f"train_fraction {self.train_fraction} leaves an empty split")
        return self


@dataclass(frozen=True)
class StandardizationStats:
    mean: np.ndarray
    std: np.ndarray


@dataclass
class DownscalingDataset:
    X: np.ndarray
    Y: np.ndarray
    split_index: int
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.X.ndim != 4:
            raise ShapeError("X rank", 4, self.X.ndim)
        if self.Y.ndim != 3:
            raise ShapeError("Y rank", 3, self.Y.ndim)
        if self.X.shape[0] != self.Y.shape[0]:
            raise ShapeError("time extent of Y", self.X.shape[0], self.Y.shape[0])
        if not 0 < self.split_index < self.X.shape[0]:
            raise ShapeError("split_index", f"in (0, {self.X.shape[0]})", self.split_index)

    @property
    def n_times(self):
        return self.X.shape[0]

    def train(self):
        return self.X[:self.split_index], self.Y[:self.split_index]

    def test(self):
        return self.X[self.split_index:], self.Y[self.split_index:]


def gaussian_kernel_1d(length):
    if length <= 0:
        return np.ones(1)
    r = int(np.ceil(3 * length))
    t = np.arange(-r, r + 1)
    k = np.exp(-0.5 * (t / length) ** 2)
    return k / k.sum()


def generate_gaussian_random_field(h, w, correlation_length, stream):
    """White noise smoothed by a truncated Gaussian kernel, scaled to unit sample variance."""
    if h < 1 or w < 1:
        raise ValueError("field extents must be >= 1")
    if correlation_length < 0:
        raise ValueError("correlation_length must be >= 0")
    k = gaussian_kernel_1d(correlation_length)
    r = len(k) // 2
    noise = stream.standard_normal((h + 2 * r, w + 2 * r))
    if r:
        noise = sliding_window_view(noise, len(k), axis=0) @ k
        noise = sliding_window_view(noise, len(k), axis=1) @ k
    sd = noise.std()
    if sd > 0:
        noise = noise / sd
    return noise.astype(np.float32)


def coarsen(field, factor):
    """Block mean over ``factor x factor`` tiles of the last two axes."""
    *lead, h, w = field.shape
    if h % factor or w % factor:
        raise ShapeError("fine extent divisible by scale", factor, (h, w))
    return field.reshape(*lead, h // factor, factor, w // factor, factor).mean(axis=(-3, -1))


def _channel_coefficients(cfg):
    # channel j is variable j // N_LEVELS at level j % N_LEVELS; the signal fades with level
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 7]))
    var_coef = rng.normal(0.0, 1.0, size=(N_VARIABLES, 3))
    var_coef[:, 0] = np.sign(var_coef[:, 0]) * (0.5 + np.abs(var_coef[:, 0]))
    level_gain = np.linspace(1.0, 0.4, N_LEVELS)
    coef = np.empty((cfg.channels, 3))
    for j in range(cfg.channels):
        v, lev = divmod(j, N_LEVELS)
        coef[j] = var_coef[v % N_VARIABLES] * level_gain[lev] + rng.normal(0.0, 0.1, size=3)
    offsets = rng.normal(0.0, 5.0, size=cfg.channels)
    scales = np.exp(rng.normal(0.0, 1.0, size=cfg.channels))
    return coef, offsets, scales


def _day(cfg, seq, coef, offsets, scales):
    rng = np.random.default_rng(seq)
    hf, wf = cfg.fine_h, cfg.fine_w
    g = cfg.daily_std * rng.standard_normal()
    large = generate_gaussian_random_field(hf, wf, cfg.large_corr_length, rng).astype(np.float64)
    fine = generate_gaussian_random_field(hf, wf, cfg.fine_corr_length, rng).astype(np.float64)
    state = g + cfg.large_weight * large + cfg.fine_weight * fine
    y = np.expm1(cfg.intensity * np.maximum(state - cfg.wet_shift, 0.0))
    # predictors: smooth transforms of the large-scale state
    smooth = g + cfg.large_weight * large
    basis = np.stack([smooth, np.tanh(smooth), smooth ** 2 / 2])
    x = np.empty((cfg.channels, cfg.coarse_h, cfg.coarse_w))
    for j in range(cfg.channels):
        fine_ch = np.tensordot(coef[j], basis, axes=1)
        noise = generate_gaussian_random_field(cfg.coarse_h, cfg.coarse_w,
                                               cfg.noise_corr_length, rng)
        x[j] = offsets[j] + scales[j] * (coarsen(fine_ch, cfg.scale) + cfg.predictor_noise * noise)
    return x.astype(np.float32), y.astype(np.float32)


def generate_raw(cfg):
    """Unstandardized predictors and precipitation for every time step."""
    cfg.validate()
    coef, offsets, scales = _channel_coefficients(cfg)
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_times)
    X = np.empty((cfg.n_times, cfg.channels, cfg.coarse_h, cfg.coarse_w), dtype=np.float32)
    Y = np.empty((cfg.n_times, cfg.fine_h, cfg.fine_w), dtype=np.float32)
    for t, seq in enumerate(seqs):
        X[t], Y[t] = _day(cfg, seq, coef, offsets, scales)
    return X, Y


def compute_standardization(x_train):
    x_train = np.asarray(x_train, dtype=np.float64)
    if x_train.shape[0] == 0:
        raise ValueError("empty training portion")
    axes = (0,) + tuple(range(2, x_train.ndim))
    mean = x_train.mean(axis=axes)
    std = x_train.std(axis=axes)
    bad = np.nonzero(~(std > 0))[0]
    if bad.size:
        raise ValueError(f"channel {int(bad[0])} has zero variance")
    return StandardizationStats(mean, std)


def standardize_predictors(x, stats):
    x = np.asarray(x, dtype=np.float64)
    shape = (1, -1) + (1,) * (x.ndim - 2)
    return ((x - stats.mean.reshape(shape)) / stats.std.reshape(shape)).astype(np.float32)


def generate_dataset(cfg=None):
    """Synthetic dataset with predictors standardized on the training slice."""
    cfg = (cfg or SynthConfig()).validate()
    X, Y = generate_raw(cfg)
    split = cfg.split_index
    stats = compute_standardization(X[:split])
    meta = {
        "generator": dataclasses.asdict(cfg),
        "seed": cfg.seed,
        "standardization": {"mean": stats.mean.tolist(), "std": stats.std.tolist()},
    }
    return DownscalingDataset(standardize_predictors(X, stats), Y, split, meta)
