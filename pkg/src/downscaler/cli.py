"""``downscaler`` command line: gen-data, train, sample, evaluate.

Exit codes: 0 ok, 2 config error, 3 data/shape error, 4 numeric failure,
1 anything else (e.g. unwritable output).
"""
import argparse
import logging
import os
import sys

from . import baseline as bl
from . import cvae as cv
from . import io, pipeline
from .config import load_config
from .data import generate_dataset
from .errors import ConfigError, DownscalerError, ShapeError

log = logging.getLogger("downscaler")


def _check_writable(path):
    parent = os.path.dirname(os.path.abspath(path)) or "."
    if not os.path.isdir(parent):
        raise OSError(f"output directory does not exist: {parent}")
    if not os.access(parent, os.W_OK):
        raise OSError(f"output directory is not writable: {parent}")


def cmd_gen_data(args):
    cfg = load_config(args.config)
    _check_writable(args.out)
    ds = generate_dataset(cfg.synth())
    io.save_dataset(args.out, ds)
    print(f"wrote {args.out}: X{list(ds.X.shape)} Y{list(ds.Y.shape)} "
          f"split {ds.split_index} seed {cfg.seed}")
    return 0


def cmd_train(args):
    cfg = load_config(args.config)
    loss_csv = args.loss_csv or args.out + ".loss.csv"
    ds = io.load_dataset(args.data)
    mcfg = cfg.cvae() if args.model == "cvae" else cfg.baseline()
    if ds.X.shape[1:] != (mcfg.channels, mcfg.coarse_h, mcfg.coarse_w) \
            or ds.Y.shape[1:] != (mcfg.fine_h, mcfg.fine_w):
        raise ShapeError("dataset vs config shapes",
                         f"X {(mcfg.channels, mcfg.coarse_h, mcfg.coarse_w)}, "
                         f"Y {(mcfg.fine_h, mcfg.fine_w)}",
                         f"X {ds.X.shape[1:]}, Y {ds.Y.shape[1:]}")
    _check_writable(args.out)
    _check_writable(loss_csv)
    trainer = cv.train_cvae if args.model == "cvae" else bl.train_baseline
    model, history = trainer(ds, mcfg, cfg.train())
    pipeline.save_model(args.out, model)
    pipeline.write_history_csv(loss_csv, history)
    last = {k: v for k, v in history[-1].items() if k != "epoch"}
    print(f"trained {args.model} for {len(history)} epochs on {ds.split_index} days; "
          f"final {last}; wrote {args.out} and {loss_csv}")
    return 0


def cmd_sample(args):
    cfg = load_config(args.config)
    n = cfg.ensemble_size if args.n is None else args.n
    seed = cfg.seed if args.seed is None else args.seed
    if n < 1:
        raise ConfigError(f"--n must be >= 1, got {n}")
    if seed < 0:
        raise ConfigError(f"--seed must be >= 0, got {seed}")
    model = pipeline.load_model(args.ckpt)
    ds = io.load_dataset(args.data)
    pipeline.check_compatible(model, ds)
    Xt, Yt = ds.test()
    if args.pgm_dir is not None and not 0 <= args.pgm_day < len(Xt):
        raise ConfigError(f"--pgm-day must lie in [0, {len(Xt) - 1}], got {args.pgm_day}")
    _check_writable(args.out)
    if args.pgm_dir is not None:
        _check_writable(os.path.normpath(args.pgm_dir))
    samples = pipeline.sample_ensembles(model, Xt, n, seed)
    pipeline.write_samples(args.out, samples, ds, model, n, seed)
    print(f"wrote {args.out}: {pipeline.model_kind(model)} samples {list(samples.shape)}")
    if args.pgm_dir is not None:
        paths = pipeline.write_maps(args.pgm_dir, pipeline.model_kind(model), args.pgm_day,
                                    samples[args.pgm_day, :cfg.map_ensemble_size],
                                    Yt[args.pgm_day])
        print(f"wrote {len(paths)} maps to {args.pgm_dir}")
    return 0


def cmd_evaluate(args):
    cfg = load_config(args.config)
    _check_writable(args.out)
    report = pipeline.evaluate_files(args.truth, args.cvae, args.baseline,
                                     cfg.wet_threshold, cfg.max_lag)
    report.write_csv(args.out)
    print(pipeline.verdict(report))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="downscaler", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log per-epoch losses")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write a synthetic DSET dataset")
    g.add_argument("--config")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model on the training slice")
    t.add_argument("--model", choices=("cvae", "baseline"), required=True)
    t.add_argument("--data", required=True)
    t.add_argument("--config")
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--loss-csv", help="per-epoch loss CSV (default: <out>.loss.csv)")
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("sample", help="sample ensembles over the test slice")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--data", required=True)
    s.add_argument("--config")
    s.add_argument("--n", type=int, help="ensemble size (default: ensemble_size from config)")
    s.add_argument("--seed", type=int, help="sampling seed (default: seed from config)")
    s.add_argument("--out", required=True)
    s.add_argument("--pgm-dir", help="write map_ensemble_size member maps plus the truth")
    s.add_argument("--pgm-day", type=int, default=0, help="test-slice day index for maps")
    s.set_defaults(func=cmd_sample)

    e = sub.add_parser("evaluate", help="compare both models against the truth")
    e.add_argument("--truth", required=True)
    e.add_argument("--cvae", required=True)
    e.add_argument("--baseline", required=True)
    e.add_argument("--config")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_evaluate)
    return p


def _thread_limit():
    raw = os.environ.get("DOWNSCALER_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(f"DOWNSCALER_THREADS must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(f"DOWNSCALER_THREADS must be >= 1, got {n}")
    return n


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=_thread_limit()):
            return args.func(args)
    except DownscalerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
