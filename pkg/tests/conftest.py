import contextlib

import numpy as np
import pytest

from downscaler import nn
from downscaler.baseline import BaselineConfig
from downscaler.cvae import CvaeConfig

ACCEPTANCE_LINES = []


def tiny_cvae_config(**kw):
    # 4x4 predictand from a 1x1 coarse grid, 2 predictor channels, d_z = 2
    base = dict(channels=2, coarse_h=1, coarse_w=1, scale=4, d_z=2, d_zx=3,
                embed_widths=(4, 3, 2), encoder_widths=(3, 2), decoder_base=3,
                decoder_widths=(3, 2))
    base.update(kw)
    return CvaeConfig(**base)


def tiny_baseline_config(**kw):
    base = dict(channels=2, coarse_h=1, coarse_w=1, scale=4, conv_widths=(4, 3, 2))
    base.update(kw)
    return BaselineConfig(**base)


@contextlib.contextmanager
def relu_pattern():
    """Record the on/off pattern of every relu evaluated inside the block."""
    seen = []
    original = nn.relu_fn

    def recording(x):
        seen.append(np.asarray(x) > 0)
        return original(x)

    nn.relu_fn = recording
    try:
        yield seen
    finally:
        nn.relu_fn = original


def _same_pattern(a, b):
    return len(a) == len(b) and all(np.array_equal(u, v) for u, v in zip(a, b))


def kink_safe_error(objective, params, coords, eps=1e-3):
    """Central-difference check of ``objective(params) -> (value, grads)``.

    ``coords`` maps parameter names to flat indices (None for all). Coordinates whose
    +-eps perturbation flips any relu are skipped, since the objective is not smooth
    across the kink. Returns ``(max relative error, checked, skipped)``.
    """
    with relu_pattern() as base:
        _, grads = objective(params)
    base = list(base)
    worst, checked, skipped = 0.0, 0, 0
    for name, idx in coords.items():
        idx = range(params[name].size) if idx is None else idx
        for i in idx:
            crossed = [False]

            def f(v, name=name):
                with relu_pattern() as pat:
                    value, g = objective(dict(params, **{name: v}))
                if not _same_pattern(base, pat):
                    crossed[0] = True
                return value, grads[name]
            err = nn.finite_difference_check(f, params[name], eps, coords=[i])
            if crossed[0]:
                skipped += 1
            else:
                worst = max(worst, err)
                checked += 1
    return worst, checked, skipped


def randomize_biases(params, rng, scale=0.5):
    return {k: (rng.normal(0, scale, v.shape).astype(v.dtype) if k.endswith(".bias") else v)
            for k, v in params.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def default_dataset():
    from downscaler.data import generate_dataset
    return generate_dataset()
