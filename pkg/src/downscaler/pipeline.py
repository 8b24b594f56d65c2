"""File-level steps of the experiment: checkpoints, ensembles, reports."""
import csv
import os

import numpy as np

from . import baseline as bl
from . import cvae as cv
from . import io, metrics
from .errors import FormatError, ShapeError

MODEL_CODES = {"cvae": 0, "baseline": 1}
_HP = "hp/"


def model_kind(model):
    return "cvae" if isinstance(model, cv.CvaeParams) else "baseline"


def model_to_tensors(model):
    c = model.config
    hp = {"model": MODEL_CODES[model_kind(model)], "channels": c.channels,
          "coarse_h": c.coarse_h, "coarse_w": c.coarse_w, "scale": c.scale}
    if isinstance(model, cv.CvaeParams):
        hp.update(d_z=c.d_z, d_zx=c.d_zx, decoder_base=c.decoder_base,
                  embed_widths=c.embed_widths, encoder_widths=c.encoder_widths,
                  decoder_widths=c.decoder_widths)
    else:
        hp.update(conv_widths=c.conv_widths, wet_threshold=c.wet_threshold)
    tensors = {_HP + k: np.asarray(v, dtype=np.float32) for k, v in hp.items()}
    tensors.update((k, model.params[k]) for k in sorted(model.params))
    return tensors


def model_from_tensors(tensors, what="checkpoint"):
    try:
        hp = {k[len(_HP):]: v for k, v in tensors.items() if k.startswith(_HP)}
        code = int(hp["model"])
        ints = lambda key: tuple(int(v) for v in np.atleast_1d(hp[key]))  # noqa: E731
        common = dict(channels=int(hp["channels"]), coarse_h=int(hp["coarse_h"]),
                      coarse_w=int(hp["coarse_w"]), scale=int(hp["scale"]))
        if code == MODEL_CODES["cvae"]:
            cfg = cv.CvaeConfig(**common, d_z=int(hp["d_z"]), d_zx=int(hp["d_zx"]),
                                embed_widths=ints("embed_widths"),
                                encoder_widths=ints("encoder_widths"),
                                decoder_base=int(hp["decoder_base"]),
                                decoder_widths=ints("decoder_widths"))
            cls = cv.CvaeParams
        elif code == MODEL_CODES["baseline"]:
            cfg = bl.BaselineConfig(**common, conv_widths=ints("conv_widths"),
                                    wet_threshold=float(hp["wet_threshold"]))
            cls = bl.BaselineParams
        else:
            raise FormatError(f"{what}: unknown model code {code}")
    except KeyError as exc:
        raise FormatError(f"{what}: missing hyperparameter {exc.args[0]!r}") from None
    params = {k: v for k, v in tensors.items() if not k.startswith(_HP)}
    model = cls(cfg, params)
    expected = {}
    for layers in _all_layer_stacks(model):
        for layer in layers:
            if layer.kind == "conv2d":
                expected[f"{layer.name}.weight"] = (layer.out_channels, layer.in_channels,
                                                    layer.kernel, layer.kernel)
                expected[f"{layer.name}.bias"] = (layer.out_channels,)
            elif layer.kind == "dense":
                expected[f"{layer.name}.weight"] = (layer.out_features, layer.in_features)
                expected[f"{layer.name}.bias"] = (layer.out_features,)
    if set(expected) != set(params):
        missing = sorted(set(expected) - set(params)) or sorted(set(params) - set(expected))
        raise FormatError(f"{what}: parameter set mismatch at {missing[0]!r}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise FormatError(f"{what}: tensor {name!r} has shape {params[name].shape}, "
                              f"architecture needs {shape}")
    return model


def _all_layer_stacks(model):
    if isinstance(model, cv.CvaeParams):
        return [model.embed, model.encoder, model.mu_head, model.logvar_head, model.decoder]
    return [model.features, *model.heads]


def save_model(path, model):
    io.write_checkpoint(path, model_to_tensors(model))


def load_model(path):
    return model_from_tensors(io.read_checkpoint(path), what=str(path))


def check_compatible(model, ds):
    c = model.config
    want_x = (c.channels, c.coarse_h, c.coarse_w)
    want_y = (c.fine_h, c.fine_w)
    if ds.X.shape[1:] != want_x or ds.Y.shape[1:] != want_y:
        raise ShapeError("checkpoint/dataset shapes",
                         f"X {want_x}, Y {want_y} (checkpoint)",
                         f"X {ds.X.shape[1:]}, Y {ds.Y.shape[1:]} (dataset)")


def write_history_csv(path, history):
    keys = list(history[0])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(keys)
        for row in history:
            w.writerow([row[k] if k == "epoch" else f"{row[k]:.9g}" for k in keys])


def sample_ensembles(model, X, n, seed):
    """``[T, n, H_f, W_f]`` samples; day ``t`` uses its own derived stream."""
    seqs = np.random.SeedSequence(seed).spawn(len(X))
    c = model.config
    out = np.empty((len(X), n, c.fine_h, c.fine_w), dtype=np.float32)
    if isinstance(model, cv.CvaeParams):
        for t, seq in enumerate(seqs):
            out[t] = np.stack(cv.sample_downscaled(X[t], model, n, np.random.default_rng(seq)))
        return out
    for start in range(0, len(X), 64):
        p, a, b = bl.bg_forward_batch(X[start:start + 64], model)
        for i in range(len(p)):
            rng = np.random.default_rng(seqs[start + i])
            field = bl.BernoulliGammaField(p[i], a[i], b[i])
            out[start + i] = np.stack([bl.sample_bg_field(field, rng) for _ in range(n)])
    return out


def write_samples(path, samples, ds, model, n, seed):
    meta = {"kind": "samples", "model": model_kind(model), "n": n, "seed": seed,
            "n_times": ds.n_times, "dataset_seed": ds.metadata.get("seed")}
    io.write_dset(path, {"samples": samples}, ds.split_index, meta)


def read_samples(path):
    tensors, split, meta = io.read_dset(path)
    if "samples" not in tensors or meta.get("kind") != "samples":
        raise FormatError(f"{path}: not a sample file")
    return tensors["samples"], split, meta


def write_maps(pgm_dir, kind, day, samples_day, truth_day):
    """PGM triptych for one test day: every ensemble member plus the truth."""
    os.makedirs(pgm_dir, exist_ok=True)
    vmax = float(max(np.log1p(samples_day.max()), np.log1p(truth_day.max()), 1e-6))
    paths = []
    for k, f in enumerate(samples_day):
        path = os.path.join(pgm_dir, f"{kind}_day{day:04d}_sample{k}.pgm")
        metrics.write_pgm(path, f, vmax)
        paths.append(path)
    path = os.path.join(pgm_dir, f"truth_day{day:04d}.pgm")
    metrics.write_pgm(path, truth_day, vmax)
    return paths + [path]


def evaluate_files(truth_path, cvae_path, baseline_path, wet_threshold=1.0, max_lag=5):
    ds = io.load_dataset(truth_path)
    truth = ds.test()[1]
    sets = {}
    for name, path in (("cvae", cvae_path), ("baseline", baseline_path)):
        samples, split, meta = read_samples(path)
        if split != ds.split_index or samples.shape[0] != truth.shape[0] \
                or meta.get("n_times") != ds.n_times:
            raise ShapeError(f"{name} sample coverage",
                             f"{truth.shape[0]} test days from index {ds.split_index}",
                             f"{samples.shape[0]} days from index {split}")
        sets[name] = samples
    return metrics.compare_models(sets["cvae"], sets["baseline"], truth, wet_threshold, max_lag)


def verdict(report):
    t, c, b = (report.get("neighbor_correlation", m) for m in ("truth", "cvae", "baseline"))
    closer = "cvae" if abs(c - t) < abs(b - t) else "baseline"
    return (f"neighbor correlation: truth {t:.3f}, cvae {c:.3f}, baseline {b:.3f}; "
            f"{closer} is closer to the observed spatial structure")
