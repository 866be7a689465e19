"""High-precision reference values built directly from defining formulas.

K: tanh-sinh quadrature of int_0^inf exp(-x cosh t) cosh(nu t) dt in mpmath.
I, J: power series summed in mpmath with enough guard digits.
"""

import functools

import mpmath as mp


@functools.lru_cache(maxsize=None)
def log_k(nu, x, dps=30):
    with mp.workdps(dps):
        nu, x = mp.mpf(nu), mp.mpf(x)
        ts = mp.asinh(nu / x) if nu > 0 else mp.mpf(0)
        width = 1 / mp.sqrt(x * mp.cosh(ts))

        def f(t):
            return mp.exp(-x * (mp.cosh(t) - 1) + nu * (t - ts)) * (1 + mp.exp(-2 * nu * t)) / 2

        peak = -x * (mp.cosh(ts) - 1)
        pts = {mp.mpf(0), ts}
        for side in (-1, 1):
            step = width
            while True:
                t = ts + side * step
                if t <= 0:
                    break
                pts.add(t)
                if -x * (mp.cosh(t) - 1) + nu * (t - ts) < peak - 80:
                    break
                step *= 1.5
        pts = sorted(pts)
        val = mp.quad(f, pts)
        return float(-x + nu * ts + mp.log(val))


def _series(n, x, sign, dps):
    with mp.workdps(dps):
        x = mp.mpf(x)
        q = sign * x * x / 4
        term = (x / 2) ** n / mp.factorial(n)
        total = term
        k = 0
        while True:
            k += 1
            term *= q / (k * (n + k))
            total += term
            if abs(term) < abs(total) * mp.mpf(10) ** (-dps + 5) and k * k > abs(q):
                break
        return total


@functools.lru_cache(maxsize=None)
def log_i(n, x):
    # all terms positive; 30 digits plus headroom
    return float(mp.log(_series(abs(n), x, 1, 40)))


@functools.lru_cache(maxsize=None)
def j_value(n, x):
    # alternating series: guard digits to cover cancellation of size e^x
    dps = 30 + int(float(x) / 2.0)
    v = _series(n, x, -1, dps)
    return float(mp.sign(v)), float(mp.log(abs(v)))
