"""lnΓ, digamma and a Gamma sampler, in float64."""
import numpy as np

_LANCZOS_G = 7.0
_LANCZOS_COEF = np.array([
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
])


def _lngamma_ge_half(x):
    x = x - 1.0
    a = np.full_like(x, _LANCZOS_COEF[0])
    for i in range(1, len(_LANCZOS_COEF)):
        a = a + _LANCZOS_COEF[i] / (x + i)
    t = x + _LANCZOS_G + 0.5
    return 0.5 * np.log(2 * np.pi) + (x + 0.5) * np.log(t) - t + np.log(a)


def lngamma(x):
    """Log-gamma for positive arguments (Lanczos, g=7, 9 terms)."""
    x = np.asarray(x, dtype=np.float64)
    small = x < 0.5
    xs = np.where(small, 1.0 - x, x)
    out = _lngamma_ge_half(xs)
    # reflection: Γ(x)Γ(1-x) = π / sin(πx)
    refl = np.log(np.pi / np.abs(np.sin(np.pi * np.where(small, x, 0.5)))) - out
    out = np.where(small, refl, out)
    return out if out.ndim else float(out)


def digamma(x):
    """ψ(x) for x > 0: upward recurrence to x >= 6, then the asymptotic series."""
    x = np.array(x, dtype=np.float64)
    acc = np.zeros_like(x)
    for _ in range(6):
        low = x < 6
        if not low.any():
            break
        acc = acc - np.where(low, 1.0 / x, 0.0)
        x = np.where(low, x + 1.0, x)
    inv = 1.0 / x
    inv2 = inv * inv
    series = inv2 * (1 / 12 - inv2 * (1 / 120 - inv2 * (1 / 252 - inv2 * (1 / 240 - inv2 * (5 / 660)))))
    out = acc + np.log(x) - 0.5 * inv - series
    return out if out.ndim else float(out)


def sample_gamma(alpha, scale, rng, block=4):
    """Draw Gamma(alpha, scale) variates, one per element of ``alpha``.

    Marsaglia–Tsang squeeze/rejection for shape >= 1; shapes below 1 are drawn at
    shape + 1 and multiplied by U^(1/alpha). Each element consumes its own rows of
    candidate variates, so no random number is shared between elements.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    shape = alpha.shape
    alpha = alpha.reshape(-1)
    scale = np.broadcast_to(np.asarray(scale, dtype=np.float64), shape).reshape(-1)
    boost = alpha < 1
    a = np.where(boost, alpha + 1.0, alpha)
    d = a - 1.0 / 3.0
    c = 1.0 / np.sqrt(9.0 * d)
    out = np.empty(alpha.size)
    pending = np.arange(alpha.size)
    while pending.size:
        z = rng.standard_normal((pending.size, block))
        u = rng.random((pending.size, block))
        dp, cp = d[pending, None], c[pending, None]
        v = (1.0 + cp * z) ** 3
        pos = v > 0
        logv = np.log(np.where(pos, v, 1.0))
        squeeze = u < 1.0 - 0.0331 * z ** 4
        full = np.log(u) < 0.5 * z * z + dp - dp * v + dp * logv
        ok = pos & (squeeze | full)
        has = ok.any(axis=1)
        first = ok.argmax(axis=1)
        rows = np.nonzero(has)[0]
        out[pending[rows]] = d[pending[rows]] * v[rows, first[rows]]
        pending = pending[~has]
    u = rng.random(alpha.size)
    out = np.where(boost, out * u ** (1.0 / np.where(boost, alpha, 1.0)), out)
    return (out * scale).reshape(shape)
