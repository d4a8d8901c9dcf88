"""Pure-Python twin of the compiled kernel core (_core.pyx).

Same function names, same semantics, no C dependency. austere.kernels picks
whichever is available at import time, so keep the two files in lockstep.
Parameter *domain* validation lives one level up in austere.distributions;
these functions only guard values whose density is zero (return -inf) and
degenerate parameters that would otherwise produce NaNs mid-transition.
"""

import math

INF = float("inf")
LOG_2PI = math.log(2.0 * math.pi)

_CF_MAX_ITER = 400
_CF_EPS = 3e-16
_CF_TINY = 1e-300


def sigmoid(z):
    """Overflow-safe logistic function."""
    if z >= 0.0:
        return 1.0 / (1.0 + math.exp(-z))
    e = math.exp(z)
    return e / (1.0 + e)


def dot_sigmoid(w, x, n):
    """sigmoid(w . x) for length-n float buffers."""
    acc = 0.0
    for i in range(n):
        acc += w[i] * x[i]
    return sigmoid(acc)


def normal_logpdf(x, mu, sigma):
    if sigma <= 0.0:
        return -INF
    z = (x - mu) / sigma
    return -0.5 * z * z - math.log(sigma) - 0.5 * LOG_2PI


def bernoulli_logpmf(value, p):
    # value is 0 or 1; p outside [0, 1] means zero mass either way
    if p < 0.0 or p > 1.0:
        return -INF
    if value:
        return math.log(p) if p > 0.0 else -INF
    return math.log1p(-p) if p < 1.0 else -INF


def gamma_logpdf(x, shape, rate):
    if x <= 0.0:
        return -INF
    return (
        shape * math.log(rate)
        - math.lgamma(shape)
        + (shape - 1.0) * math.log(x)
        - rate * x
    )


def inv_gamma_logpdf(x, shape, rate):
    if x <= 0.0:
        return -INF
    return (
        shape * math.log(rate)
        - math.lgamma(shape)
        - (shape + 1.0) * math.log(x)
        - rate / x
    )


def beta_logpdf(x, a, b):
    if x < 0.0 or x > 1.0:
        return -INF
    norm = math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
    if x == 0.0:
        # finite only when the x**(a-1) factor degenerates
        if a == 1.0:
            return norm + (b - 1.0) * math.log1p(-x)
        return -INF
    if x == 1.0:
        if b == 1.0:
            return norm + (a - 1.0) * math.log(x)
        return -INF
    return norm + (a - 1.0) * math.log(x) + (b - 1.0) * math.log1p(-x)


def uniform_logpdf(x, low, high):
    if x < low or x > high:
        return -INF
    return -math.log(high - low)


def _betacf(a, b, x):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if abs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            break
    return h


def betainc_reg(a, b, x):
    """Regularized incomplete beta function I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = (
        math.lgamma(a + b)
        - math.lgamma(a)
        - math.lgamma(b)
        + a * math.log(x)
        + b * math.log1p(-x)
    )
    bt = math.exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def student_t_tail(t, dof):
    """Upper tail P(T > t) of a standard Student-t with dof degrees of freedom."""
    x = dof / (dof + t * t)
    half = 0.5 * betainc_reg(0.5 * dof, 0.5, x)
    if t >= 0.0:
        return half
    return 1.0 - half


def welford_add(n, mean, m2, values, count):
    """Fold `count` leading entries of `values` into running (n, mean, m2).

    Per-item updates keep the variance of a constant stream exactly zero,
    which batched two-pass formulas do not.
    """
    for i in range(count):
        v = values[i]
        n += 1
        delta = v - mean
        mean += delta / n
        m2 += delta * (v - mean)
    return n, mean, m2


BACKEND = "python"
