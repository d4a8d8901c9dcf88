# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel core. Keep in lockstep with _core_py.py (the pure twin)."""

from libc.math cimport exp, log, log1p, lgamma, fabs, INFINITY, M_PI

cdef double LOG_2PI = log(2.0 * M_PI)
cdef int _CF_MAX_ITER = 400
cdef double _CF_EPS = 3e-16
cdef double _CF_TINY = 1e-300


cdef inline double _sigmoid(double z) nogil:
    cdef double e
    if z >= 0.0:
        return 1.0 / (1.0 + exp(-z))
    e = exp(z)
    return e / (1.0 + e)


cpdef double sigmoid(double z):
    return _sigmoid(z)


cpdef double dot_sigmoid(double[:] w, double[:] x, Py_ssize_t n):
    cdef double acc = 0.0
    cdef Py_ssize_t i
    for i in range(n):
        acc += w[i] * x[i]
    return _sigmoid(acc)


cpdef double normal_logpdf(double x, double mu, double sigma):
    cdef double z
    if sigma <= 0.0:
        return -INFINITY
    z = (x - mu) / sigma
    return -0.5 * z * z - log(sigma) - 0.5 * LOG_2PI


cpdef double bernoulli_logpmf(bint value, double p):
    if p < 0.0 or p > 1.0:
        return -INFINITY
    if value:
        return log(p) if p > 0.0 else -INFINITY
    return log1p(-p) if p < 1.0 else -INFINITY


cpdef double gamma_logpdf(double x, double shape, double rate):
    if x <= 0.0:
        return -INFINITY
    return shape * log(rate) - lgamma(shape) + (shape - 1.0) * log(x) - rate * x


cpdef double inv_gamma_logpdf(double x, double shape, double rate):
    if x <= 0.0:
        return -INFINITY
    return shape * log(rate) - lgamma(shape) - (shape + 1.0) * log(x) - rate / x


cpdef double beta_logpdf(double x, double a, double b):
    cdef double norm
    if x < 0.0 or x > 1.0:
        return -INFINITY
    norm = lgamma(a + b) - lgamma(a) - lgamma(b)
    if x == 0.0:
        if a == 1.0:
            return norm + (b - 1.0) * log1p(-x)
        return -INFINITY
    if x == 1.0:
        if b == 1.0:
            return norm + (a - 1.0) * log(x)
        return -INFINITY
    return norm + (a - 1.0) * log(x) + (b - 1.0) * log1p(-x)


cpdef double uniform_logpdf(double x, double low, double high):
    if x < low or x > high:
        return -INFINITY
    return -log(high - low)


cdef double _betacf(double a, double b, double x) nogil:
    cdef double qab = a + b
    cdef double qap = a + 1.0
    cdef double qam = a - 1.0
    cdef double c = 1.0
    cdef double d = 1.0 - qab * x / qap
    cdef double h, aa, delta
    cdef int m, m2
    if fabs(d) < _CF_TINY:
        d = _CF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if fabs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if fabs(d) < _CF_TINY:
            d = _CF_TINY
        c = 1.0 + aa / c
        if fabs(c) < _CF_TINY:
            c = _CF_TINY
        d = 1.0 / d
        delta = d * c
        h *= delta
        if fabs(delta - 1.0) < _CF_EPS:
            break
    return h


cpdef double betainc_reg(double a, double b, double x):
    cdef double ln_bt, bt
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_bt = lgamma(a + b) - lgamma(a) - lgamma(b) + a * log(x) + b * log1p(-x)
    bt = exp(ln_bt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


cpdef double student_t_tail(double t, double dof):
    cdef double x = dof / (dof + t * t)
    cdef double half = 0.5 * betainc_reg(0.5 * dof, 0.5, x)
    if t >= 0.0:
        return half
    return 1.0 - half


cpdef tuple welford_add(double n, double mean, double m2, double[:] values,
                        Py_ssize_t count):
    cdef Py_ssize_t i
    cdef double v, delta
    for i in range(count):
        v = values[i]
        n += 1.0
        delta = v - mean
        mean += delta / n
        m2 += delta * (v - mean)
    return n, mean, m2


BACKEND = "cython"
