"""Optimization settings and minibatch helpers shared by both models."""
from dataclasses import dataclass
import logging
import math

import numpy as np

from .errors import ConfigError, NumericError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    kl_warmup_fraction: float = 0.2
    beta_kl_max: float = 1.0
    seed: int = 0

    def validate(self):
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not self.lr > 0:
            raise ConfigError(f"lr must be > 0, got {self.lr}")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("beta1 and beta2 must lie in [0, 1)")
        if not self.adam_eps > 0:
            raise ConfigError(f"adam_eps must be > 0, got {self.adam_eps}")
        if not 0 <= self.kl_warmup_fraction <= 1:
            raise ConfigError("kl_warmup_fraction must lie in [0, 1]")
        if self.beta_kl_max < 0:
            raise ConfigError("beta_kl_max must be >= 0")
        return self


def kl_weight(epoch, cfg):
    """Linear warm-up from 0 to ``beta_kl_max`` over the first warm-up epochs."""
    warm = math.ceil(cfg.kl_warmup_fraction * cfg.epochs)
    if warm == 0:
        return cfg.beta_kl_max
    return cfg.beta_kl_max * min(1.0, epoch / warm)


def minibatches(n, batch_size, rng):
    order = rng.permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def check_finite(value, epoch, batch):
    if not np.isfinite(value):
        raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {batch}")
