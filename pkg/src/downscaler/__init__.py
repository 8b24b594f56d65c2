"""Stochastic precipitation downscaling: a conditional VAE and a per-site
Bernoulli-Gamma CNN baseline, built on a small numpy layer set."""
from .baseline import (BaselineConfig, BaselineParams, BernoulliGammaField, bg_forward,
                       bg_nll, sample_bg_field, train_baseline)
from .cvae import (CvaeConfig, CvaeParams, GaussianLatent, LatentSample, PredictorEmbedding,
                   decode, elbo_loss, embed_predictors, encode, kl_divergence,
                   reparameterize, sample_downscaled, train_cvae)
from .data import (DownscalingDataset, SynthConfig, compute_standardization,
                   generate_dataset, generate_gaussian_random_field, standardize_predictors)
from .kernels import BACKEND
from .metrics import (MetricReport, compare_models, morans_i, neighbor_correlation,
                      per_site_scores, variogram)
from .training import TrainConfig

__version__ = "0.1.0"
