"""Fallback kernels: plain-Python scalars and vectorized numpy arrays."""
import numpy as np
from scipy.special import erfc

from ._scalar import MAX_ITER, ROOT_RTOL, SWITCH, build

cdf0, pdf0, conditional_time, interval_exit, ball_exit_time = build(lambda fn: fn)

_K_SMALL = 8  # image terms; erfc(16/sqrt(0.7)) is far below SERIES_TOL
_N_LARGE = 8  # spectral terms; exp(-32 pi^2 * 0.35) likewise


def cdf0_many(s, y):
    s = np.asarray(s, float)
    y = np.broadcast_to(np.asarray(y, float), s.shape)
    out = np.zeros(s.shape)
    small = (s > 0) & (s < SWITCH)
    if small.any():
        r = np.sqrt(2.0 * s[small])
        ys = y[small]
        k = np.arange(_K_SMALL)[:, None]
        a = erfc((2.0 * k + ys) / r)
        b = erfc((2.0 * k + 2.0 - ys) / r)
        out[small] = (a - b).sum(axis=0)
    large = s >= SWITCH
    if large.any():
        n = np.arange(1, _N_LARGE + 1)[:, None]
        sl, yl = s[large], y[large]
        terms = 2.0 / (n * np.pi) * np.sin(n * np.pi * yl) * np.exp(-0.5 * n * n * np.pi ** 2 * sl)
        out[large] = (1.0 - yl) - terms.sum(axis=0)
    return out


def pdf0_many(s, y):
    s = np.asarray(s, float)
    y = np.broadcast_to(np.asarray(y, float), s.shape)
    out = np.zeros(s.shape)
    small = (s > 0) & (s < SWITCH)
    if small.any():
        ss, ys = s[small], y[small]
        c = 1.0 / (np.sqrt(2.0 * np.pi) * ss * np.sqrt(ss))
        k = np.arange(_K_SMALL)[:, None]
        a = 2.0 * k + ys
        b = 2.0 * k + 2.0 - ys
        out[small] = (c * (a * np.exp(-0.5 * a * a / ss) - b * np.exp(-0.5 * b * b / ss))).sum(axis=0)
    large = s >= SWITCH
    if large.any():
        n = np.arange(1, _N_LARGE + 1)[:, None]
        sl, yl = s[large], y[large]
        out[large] = (n * np.pi * np.sin(n * np.pi * yl) * np.exp(-0.5 * n * n * np.pi ** 2 * sl)).sum(axis=0)
    return out


def conditional_time_many(y, u):
    y = np.asarray(y, float)
    u = np.maximum(np.asarray(u, float), 1e-300)
    target = u * (1.0 - y)
    lo = np.zeros_like(u)
    hi = np.ones_like(u)
    while True:
        low = cdf0_many(hi, y) < target
        if not low.any():
            break
        lo = np.where(low, hi, lo)
        hi = np.where(low, 2.0 * hi, hi)
    s = 0.5 * (lo + hi)
    rest = (1.0 - y) - target
    sy = np.sin(np.pi * y)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = -2.0 / np.pi ** 2 * np.log(rest * np.pi / (2.0 * sy))
    use = (sy > 0) & (rest > 0) & (lo < g) & (g < hi) & (g > SWITCH)
    s = np.where(use, g, s)
    active = np.ones(u.shape, bool)
    for _ in range(MAX_ITER):
        if not active.any():
            break
        f = cdf0_many(s, y) - target
        hi = np.where(active & (f > 0), s, hi)
        lo = np.where(active & (f <= 0), s, lo)
        done = (np.abs(f) <= ROOT_RTOL * target) | (hi - lo <= ROOT_RTOL * hi)
        active &= ~done
        d = pdf0_many(s, y)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            nxt = np.where(d > 0, s - f / d, -1.0)
        bad = ~((lo < nxt) & (nxt < hi))
        nxt = np.where(bad, 0.5 * (lo + hi), nxt)
        s = np.where(active, nxt, s)
    return s


def interval_exit_many(x, R, u_side, u_time):
    x, R = np.asarray(x, float), np.asarray(R, float)
    y = x / R
    side = (np.asarray(u_side) < y).astype(np.int64)
    yy = np.where(side == 1, 1.0 - y, y)
    return side, R * R * conditional_time_many(yy, u_time)


def warmup():
    pass

