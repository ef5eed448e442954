"""Scalar exit-time kernels, written once and compiled by ``build(jit)``.

All functions work on the unit interval: Brownian motion (generator ½Δ)
started at ``y`` in ``(0, 1)``, ``s`` is time in units of ``R**2``.
``F(s; y) = P(tau <= s, exit at 0)``; exit at 1 follows from ``y -> 1 - y``.
"""
import math

#: small-time image series below this (scaled) time, spectral series above
SWITCH = 0.35
SERIES_TOL = 1e-17
ROOT_RTOL = 1e-12
MAX_ITER = 200
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_PI2 = math.pi * math.pi


def build(jit):
    @jit
    def cdf0(s, y):
        if s <= 0.0:
            return 0.0
        if s < SWITCH:
            r = _SQRT2 * math.sqrt(s)
            total = 0.0
            k = 0
            while True:
                a = math.erfc((2.0 * k + y) / r)
                b = math.erfc((2.0 * k + 2.0 - y) / r)
                total += a - b
                if a < SERIES_TOL:
                    break
                k += 1
            return total
        total = 1.0 - y
        n = 1
        while True:
            e = math.exp(-0.5 * n * n * _PI2 * s)
            total -= 2.0 / (n * math.pi) * math.sin(n * math.pi * y) * e
            if e < SERIES_TOL:
                break
            n += 1
        return total

    @jit
    def pdf0(s, y):
        if s <= 0.0:
            return 0.0
        if s < SWITCH:
            c = 1.0 / (_SQRT2PI * s * math.sqrt(s))
            total = 0.0
            k = 0
            while True:
                a = 2.0 * k + y
                b = 2.0 * k + 2.0 - y
                ea = math.exp(-0.5 * a * a / s)
                total += c * (a * ea - b * math.exp(-0.5 * b * b / s))
                if ea * a * c < SERIES_TOL:
                    break
                k += 1
            return total
        total = 0.0
        n = 1
        while True:
            e = math.exp(-0.5 * n * n * _PI2 * s)
            total += n * math.pi * math.sin(n * math.pi * y) * e
            if e < SERIES_TOL:
                break
            n += 1
        return total

    @jit
    def conditional_time(y, u):
        """Scaled exit time given exit at 0, by inversion of ``F(.; y) / (1 - y)`` at ``u``."""
        if u < 1e-300:
            u = 1e-300
        target = u * (1.0 - y)
        lo = 0.0
        hi = 1.0
        while cdf0(hi, y) < target:
            lo = hi
            hi *= 2.0
        # tail guess from the leading spectral term
        s = 0.5 * (lo + hi)
        rest = (1.0 - y) - target
        sy = math.sin(math.pi * y)
        if sy > 0.0 and rest > 0.0:
            g = -2.0 / _PI2 * math.log(rest * math.pi / (2.0 * sy))
            if lo < g < hi and g > SWITCH:
                s = g
        for _ in range(MAX_ITER):
            f = cdf0(s, y) - target
            if f > 0.0:
                hi = s
            else:
                lo = s
            if abs(f) <= ROOT_RTOL * target or hi - lo <= ROOT_RTOL * hi:
                break
            d = pdf0(s, y)
            nxt = s - f / d if d > 0.0 else -1.0
            if not (lo < nxt < hi):
                nxt = 0.5 * (lo + hi)
            s = nxt
        return s

    @jit
    def interval_exit(x, R, u_side, u_time):
        """Exit side (0 or 1 for the far end ``R``) and exit time from ``(0, R)`` started at ``x``."""
        y = x / R
        if u_side < y:
            return 1, R * R * conditional_time(1.0 - y, u_time)
        return 0, R * R * conditional_time(y, u_time)

    @jit
    def ball_exit_time(eps, u):
        """Exit time of ``(-eps, eps)`` from the centre."""
        return 4.0 * eps * eps * conditional_time(0.5, u)

    return cdf0, pdf0, conditional_time, interval_exit, ball_exit_time
