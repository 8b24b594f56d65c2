"""Spatial-dependence statistics and per-site verification scores."""
import csv
from dataclasses import dataclass, field
import io

import numpy as np

from .errors import ShapeError


class UndefinedStatistic(ValueError):
    pass


SPATIAL_METRICS = ("neighbor_correlation", "morans_i")
SITE_METRICS = ("rmse_ensemble_mean", "wet_day_frequency_bias",
                "q50_relative_bias", "q90_relative_bias", "q98_relative_bias")
QUANTILES = {"q50_relative_bias": 0.50, "q90_relative_bias": 0.90, "q98_relative_bias": 0.98}
MODELS = ("truth", "cvae", "baseline")


def metric_names(max_lag):
    """Fixed report vocabulary for a given variogram length."""
    return (SPATIAL_METRICS
            + tuple(f"variogram_lag{h}" for h in range(1, max_lag + 1))
            + ("zero_variance_fraction",)
            + SITE_METRICS)


def _field(field):
    f = np.asarray(field, dtype=np.float64)
    if f.ndim != 2:
        raise ShapeError("field rank", 2, f.ndim)
    return f


def _adjacent_pairs(f):
    a = np.concatenate([f[:, :-1].ravel(), f[:-1, :].ravel()])
    b = np.concatenate([f[:, 1:].ravel(), f[1:, :].ravel()])
    return a, b


def neighbor_correlation(field):
    """Pearson correlation over all horizontally and vertically adjacent cell pairs."""
    f = _field(field)
    a, b = _adjacent_pairs(f)
    if a.size == 0:
        raise UndefinedStatistic("undefined correlation: field has no adjacent pairs")
    da, db = a - a.mean(), b - b.mean()
    saa, sbb = np.dot(da, da), np.dot(db, db)
    if saa == 0 or sbb == 0 or np.ptp(f) == 0:
        raise UndefinedStatistic("undefined correlation: zero-variance field")
    return float(np.dot(da, db) / np.sqrt(saa * sbb))


def morans_i(field):
    """Moran's I with binary rook-contiguity weights."""
    f = _field(field)
    z = f - f.mean()
    denom = np.dot(z.ravel(), z.ravel())
    if denom == 0 or np.ptp(f) == 0:
        raise UndefinedStatistic("undefined Moran's I: zero-variance field")
    a, b = _adjacent_pairs(z)
    s0 = 2.0 * a.size
    return float((f.size / s0) * (2.0 * np.dot(a, b)) / denom)


def variogram(field, max_lag):
    """Semivariance at integer lags 1..max_lag over axis-aligned pairs."""
    f = _field(field)
    h_, w_ = f.shape
    if not 1 <= max_lag < min(h_, w_):
        raise ValueError(f"max_lag must lie in [1, {min(h_, w_) - 1}], got {max_lag}")
    out = np.empty(max_lag)
    for h in range(1, max_lag + 1):
        d = np.concatenate([(f[:, h:] - f[:, :-h]).ravel(), (f[h:, :] - f[:-h, :]).ravel()])
        out[h - 1] = 0.5 * np.mean(d * d)
    return out


def per_site_scores(ensembles, truth, wet_threshold=1.0):
    """Per-site maps: RMSE of ensemble mean, wet-day-frequency bias, quantile biases.

    ``ensembles``: ``[T, n, H, W]`` (or a list of ``[n, H, W]``); ``truth``: ``[T, H, W]``.
    Quantile biases are ``(q_model - q_truth) / max(q_truth, wet_threshold)``.
    """
    ens = np.asarray(ensembles, dtype=np.float64)
    obs = np.asarray(truth, dtype=np.float64)
    if ens.ndim != 4:
        raise ShapeError("ensemble rank [T, n, H, W]", 4, ens.ndim)
    if ens.shape[1] < 1:
        raise ShapeError("ensemble size", ">= 1", ens.shape[1])
    if obs.shape != (ens.shape[0],) + ens.shape[2:]:
        raise ShapeError("truth shape", (ens.shape[0],) + ens.shape[2:], obs.shape)
    scores = {
        "rmse_ensemble_mean": np.sqrt(np.mean((ens.mean(axis=1) - obs) ** 2, axis=0)),
        "wet_day_frequency_bias": (np.mean(ens >= wet_threshold, axis=(0, 1))
                                   - np.mean(obs >= wet_threshold, axis=0)),
    }
    pooled = ens.reshape(-1, *ens.shape[2:])
    for name, q in QUANTILES.items():
        qm = np.quantile(pooled, q, axis=0, method="inverted_cdf")
        qt = np.quantile(obs, q, axis=0, method="inverted_cdf")
        scores[name] = (qm - qt) / np.maximum(qt, wet_threshold)
    return scores


def spatial_summary(fields, max_lag):
    """Mean spatial statistics in log1p space over fields where they are defined."""
    nc, mi, vg = [], [], []
    skipped = 0
    for f in fields:
        lf = np.log1p(np.asarray(f, dtype=np.float64))
        try:
            stats = neighbor_correlation(lf), morans_i(lf)
        except UndefinedStatistic:
            # constant fields, or a lone corner cell that leaves one pair list constant
            skipped += 1
            continue
        nc.append(stats[0])
        mi.append(stats[1])
        vg.append(variogram(lf, max_lag))
    n = len(nc)
    if n == 0:
        raise UndefinedStatistic("every field has zero variance")
    out = {"neighbor_correlation": float(np.mean(nc)), "morans_i": float(np.mean(mi))}
    curve = np.mean(vg, axis=0)
    for h in range(max_lag):
        out[f"variogram_lag{h + 1}"] = float(curve[h])
    out["zero_variance_fraction"] = skipped / (n + skipped)
    return out


@dataclass
class MetricReport:
    values: dict                # {(metric, model): float}
    ensemble_size: int
    max_lag: int
    metadata: dict = field(default_factory=dict)

    def get(self, metric, model):
        return self.values[(metric, model)]

    def rows(self):
        return [(m, model, self.values[(m, model)])
                for m in metric_names(self.max_lag) for model in MODELS]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "model", "value"])
        for m, model, v in self.rows():
            w.writerow([m, model, f"{v:.9g}"])
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def compare_models(cvae_samples, baseline_samples, truth, wet_threshold=1.0, max_lag=5):
    """Score both sample sets ``[T, n, H, W]`` against ``truth`` ``[T, H, W]``."""
    cv = np.asarray(cvae_samples)
    bl = np.asarray(baseline_samples)
    obs = np.asarray(truth)
    if cv.shape != bl.shape:
        raise ShapeError("baseline sample shape", cv.shape, bl.shape)
    if cv.ndim != 4 or cv.shape[0] != obs.shape[0] or cv.shape[2:] != obs.shape[1:]:
        raise ShapeError("test coverage [T, n, H, W] vs truth", (obs.shape[0], "n") + obs.shape[1:],
                         cv.shape)
    values = {}
    for model, ens in (("truth", obs[:, None]), ("cvae", cv), ("baseline", bl)):
        spatial = spatial_summary(ens.reshape(-1, *ens.shape[2:]), max_lag)
        for k, v in spatial.items():
            values[(k, model)] = v
        for k, v in per_site_scores(ens, obs, wet_threshold).items():
            values[(k, model)] = float(np.mean(v))
    return MetricReport(values, ensemble_size=cv.shape[1], max_lag=max_lag,
                        metadata={"wet_threshold": wet_threshold, "n_test": obs.shape[0]})


def write_pgm(path, field, vmax):
    """8-bit binary PGM of log1p precipitation scaled so ``vmax`` maps to 255."""
    lf = np.log1p(np.maximum(np.asarray(field, dtype=np.float64), 0))
    scale = 255.0 / vmax if vmax > 0 else 0.0
    img = np.clip(np.rint(lf * scale), 0, 255).astype(np.uint8)
    h, w = img.shape
    header = (f"P5\n# log1p(mm/day) = pixel * {vmax:.9g} / 255\n{w} {h}\n255\n").encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + img.tobytes())
