"""Flat ``key = value`` run configuration.

One file configures the whole pipeline. ``#`` starts a comment; unknown or
repeated keys are errors.
"""
from dataclasses import dataclass, fields
import math

from .baseline import BaselineConfig
from .cvae import CvaeConfig
from .data import SynthConfig
from .errors import ConfigError
from .training import TrainConfig


def _widths(text):
    try:
        vals = tuple(int(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise ConfigError(f"expected comma-separated integers, got {text!r}") from None
    if not vals or min(vals) < 1:
        raise ConfigError(f"widths must be positive integers, got {text!r}")
    return vals


@dataclass(frozen=True)
class RunConfig:
    # synthetic data
    n_times: int = 2000
    channels: int = 20
    coarse_h: int = 8
    coarse_w: int = 8
    scale: int = 4
    large_corr_length: float = SynthConfig.large_corr_length
    fine_corr_length: float = SynthConfig.fine_corr_length
    daily_std: float = SynthConfig.daily_std
    large_weight: float = SynthConfig.large_weight
    fine_weight: float = SynthConfig.fine_weight
    wet_shift: float = SynthConfig.wet_shift
    intensity: float = SynthConfig.intensity
    predictor_noise: float = SynthConfig.predictor_noise
    noise_corr_length: float = SynthConfig.noise_corr_length
    train_fraction: float = 0.8
    # architecture
    d_z: int = 16
    d_zx: int = 128
    embed_widths: tuple = (50, 25, 10)
    encoder_widths: tuple = (16, 8)
    decoder_base: int = 8
    decoder_widths: tuple = (8, 4)
    # optimization
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kl_warmup_fraction: float = 0.2
    beta_kl_max: float = 1.0
    # evaluation
    wet_threshold: float = 1.0
    ensemble_size: int = 20
    map_ensemble_size: int = 3
    max_lag: int = 5
    seed: int = 1234

    def validate(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and not math.isfinite(v):
                raise ConfigError(f"{f.name} must be finite, got {v}")
        if self.scale < 2 or self.scale & (self.scale - 1):
            raise ConfigError(f"scale must be a power of two >= 2, got {self.scale}")
        if 2 ** len(self.decoder_widths) != self.scale:
            raise ConfigError("decoder_widths needs one entry per 2x upsampling stage")
        for name in ("d_z", "d_zx", "decoder_base", "ensemble_size", "map_ensemble_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.wet_threshold < 0:
            raise ConfigError(f"wet_threshold must be >= 0, got {self.wet_threshold}")
        if not 1 <= self.max_lag < min(self.coarse_h, self.coarse_w) * self.scale:
            raise ConfigError(f"max_lag out of range: {self.max_lag}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        self.synth().validate()
        self.train().validate()
        return self

    def synth(self):
        keys = {f.name for f in fields(SynthConfig)}
        return SynthConfig(**{k: getattr(self, k) for k in keys})

    def train(self):
        keys = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{k: getattr(self, k) for k in keys})

    def cvae(self):
        return CvaeConfig(self.channels, self.coarse_h, self.coarse_w, self.scale, self.d_z,
                          self.d_zx, self.embed_widths, self.encoder_widths,
                          self.decoder_base, self.decoder_widths)

    def baseline(self):
        return BaselineConfig(self.channels, self.coarse_h, self.coarse_w, self.scale,
                              self.embed_widths, self.wet_threshold)


_TYPES = {f.name: type(f.default) for f in fields(RunConfig)}


def _convert(key, text):
    kind = _TYPES[key]
    try:
        if kind is tuple:
            return _widths(text)
        if kind is int:
            return int(text)
        return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind.__name__}") from None


def parse_config(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = _convert(key, value)
    return RunConfig(**values).validate()


def load_config(path=None):
    if path is None:
        return RunConfig().validate()
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except UnicodeDecodeError:
        raise ConfigError(f"config {path} is not UTF-8") from None
    return parse_config(text)


def format_config(cfg):
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        lines.append(f"{f.name} = {','.join(map(str, v)) if isinstance(v, tuple) else v}")
    return "\n".join(lines) + "\n"
