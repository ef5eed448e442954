import numpy as np
from numba import njit

from ._scalar import build

cdf0, pdf0, conditional_time, interval_exit, ball_exit_time = build(njit(cache=True))


@njit(cache=True)
def interval_exit_many(x, R, u_side, u_time):
    n = x.shape[0]
    side = np.empty(n, np.int64)
    t = np.empty(n)
    for k in range(n):
        side[k], t[k] = interval_exit(x[k], R[k], u_side[k], u_time[k])
    return side, t


@njit(cache=True)
def conditional_time_many(y, u):
    out = np.empty(u.shape[0])
    for k in range(u.shape[0]):
        out[k] = conditional_time(y[k], u[k])
    return out


def warmup():
    interval_exit(0.3, 1.0, 0.5, 0.5)
    ball_exit_time(0.1, 0.5)
    interval_exit_many(np.array([0.5]), np.array([1.0]), np.array([0.5]), np.array([0.5]))
    conditional_time_many(np.array([0.5]), np.array([0.5]))
