"""Primitive distribution families: sampling, log-densities, support checks.

Scalar log-density math lives in the kernel backend (austere.kernels) so the
hot per-section loop can run compiled; this module adds parameter validation,
the vector-valued families, and the family registry used by the evaluator.
"""

import math
import numbers

import numpy as np

from austere import kernels
from austere.errors import DimensionMismatch, DomainError

__all__ = [
    "Distribution",
    "FAMILIES",
    "get_family",
    "linear_logistic",
    "student_t_tail",
]


def _as_float(x, what):
    if isinstance(x, bool) or not isinstance(x, numbers.Real):
        raise DomainError("%s must be a real number, got %r" % (what, x))
    return float(x)


def _as_vector(x, what):
    arr = np.asarray(x, dtype=float)
    if arr.ndim != 1:
        raise DomainError("%s must be a 1-d real vector" % what)
    return arr


class Distribution:
    """One primitive family. Subclasses set `name`, `arity` and `value_kind`
    ('bool' | 'real' | 'vector') and implement the three hooks below.

    log_pdf must never raise on a value argument: zero-density values map to
    -inf so transitions can treat them as certain rejections. Parameter
    problems raise DomainError from validate_params, which runs when a node is
    (re)created; mid-transition parameter excursions are guarded inside the
    kernels and also map to -inf.
    """

    name = ""
    arity = 0
    value_kind = "real"

    def validate_params(self, params):
        if len(params) != self.arity:
            raise DomainError(
                "%s expects %d parameters, got %d" % (self.name, self.arity, len(params))
            )

    def sample(self, params, rng):
        raise NotImplementedError

    def log_pdf(self, params, value):
        raise NotImplementedError

    def in_support(self, params, value):
        """True when the observed value has positive density under params."""
        if self.value_kind == "bool":
            if not isinstance(value, bool):
                return False
        elif self.value_kind == "real":
            if isinstance(value, bool) or not isinstance(value, numbers.Real):
                return False
            if not math.isfinite(value):
                return False
        else:
            try:
                _as_vector(value, "observed value")
            except DomainError:
                return False
        return self.log_pdf(params, value) > -math.inf


class Bernoulli(Distribution):
    name = "bernoulli"
    arity = 1
    value_kind = "bool"

    def validate_params(self, params):
        super().validate_params(params)
        p = _as_float(params[0], "bernoulli weight")
        if not 0.0 <= p <= 1.0:
            raise DomainError("bernoulli weight must lie in [0, 1], got %g" % p)

    def sample(self, params, rng):
        return bool(rng.random() < params[0])

    def log_pdf(self, params, value):
        return kernels.bernoulli_logpmf(bool(value), float(params[0]))


class Normal(Distribution):
    name = "normal"
    arity = 2

    def validate_params(self, params):
        super().validate_params(params)
        _as_float(params[0], "normal mean")
        sd = _as_float(params[1], "normal std")
        if sd <= 0.0 or not math.isfinite(sd):
            raise DomainError("normal std must be positive, got %g" % sd)

    def sample(self, params, rng):
        return float(params[0]) + float(params[1]) * rng.standard_normal()

    def log_pdf(self, params, value):
        return kernels.normal_logpdf(float(value), float(params[0]), float(params[1]))


class Gamma(Distribution):
    """Shape-rate parameterization: mean = shape / rate."""

    name = "gamma"
    arity = 2

    def validate_params(self, params):
        super().validate_params(params)
        shape = _as_float(params[0], "gamma shape")
        rate = _as_float(params[1], "gamma rate")
        if shape <= 0.0 or rate <= 0.0:
            raise DomainError("gamma shape and rate must be positive")

    def sample(self, params, rng):
        return float(rng.standard_gamma(params[0]) / params[1])

    def log_pdf(self, params, value):
        return kernels.gamma_logpdf(float(value), float(params[0]), float(params[1]))


class InvGamma(Distribution):
    """Shape-rate parameterization: mean = rate / (shape - 1) for shape > 1."""

    name = "inv_gamma"
    arity = 2

    def validate_params(self, params):
        super().validate_params(params)
        shape = _as_float(params[0], "inv_gamma shape")
        rate = _as_float(params[1], "inv_gamma rate")
        if shape <= 0.0 or rate <= 0.0:
            raise DomainError("inv_gamma shape and rate must be positive")

    def sample(self, params, rng):
        return float(params[1] / rng.standard_gamma(params[0]))

    def log_pdf(self, params, value):
        return kernels.inv_gamma_logpdf(float(value), float(params[0]), float(params[1]))


class Beta(Distribution):
    name = "beta"
    arity = 2

    def validate_params(self, params):
        super().validate_params(params)
        a = _as_float(params[0], "beta a")
        b = _as_float(params[1], "beta b")
        if a <= 0.0 or b <= 0.0:
            raise DomainError("beta parameters must be positive")

    def sample(self, params, rng):
        return float(rng.beta(params[0], params[1]))

    def log_pdf(self, params, value):
        return kernels.beta_logpdf(float(value), float(params[0]), float(params[1]))


class UniformContinuous(Distribution):
    name = "uniform_continuous"
    arity = 2

    def validate_params(self, params):
        super().validate_params(params)
        low = _as_float(params[0], "uniform low")
        high = _as_float(params[1], "uniform high")
        if not low < high:
            raise DomainError("uniform requires low < high")

    def sample(self, params, rng):
        return float(rng.uniform(params[0], params[1]))

    def log_pdf(self, params, value):
        low = float(params[0])
        high = float(params[1])
        if high <= low:
            return -math.inf
        return kernels.uniform_logpdf(float(value), low, high)


class MultivariateNormal(Distribution):
    """Full-covariance Gaussian over real vectors."""

    name = "multivariate_normal"
    arity = 2
    value_kind = "vector"

    def _factor(self, params):
        mean = _as_vector(params[0], "mvn mean")
        cov = np.asarray(params[1], dtype=float)
        if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
            raise DomainError("mvn covariance must be a square matrix")
        if cov.shape[0] != mean.shape[0]:
            raise DimensionMismatch(
                "mvn mean has length %d but covariance is %dx%d"
                % (mean.shape[0], cov.shape[0], cov.shape[1])
            )
        if not np.allclose(cov, cov.T, rtol=1e-10, atol=1e-12):
            raise DomainError("mvn covariance must be symmetric")
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise DomainError("mvn covariance must be positive definite") from None
        return mean, chol

    def validate_params(self, params):
        super().validate_params(params)
        self._factor(params)

    def sample(self, params, rng):
        mean, chol = self._factor(params)
        z = rng.standard_normal(mean.shape[0])
        return mean + chol @ z

    def log_pdf(self, params, value):
        try:
            mean, chol = self._factor(params)
            x = _as_vector(value, "mvn value")
        except (DomainError, DimensionMismatch):
            return -math.inf
        if x.shape != mean.shape:
            return -math.inf
        y = np.linalg.solve(chol, x - mean)
        d = mean.shape[0]
        log_det = float(np.sum(np.log(np.diag(chol))))
        return float(-0.5 * (d * math.log(2.0 * math.pi)) - log_det - 0.5 * float(y @ y))


_FAMILY_LIST = [
    Bernoulli(),
    Normal(),
    Gamma(),
    InvGamma(),
    Beta(),
    UniformContinuous(),
    MultivariateNormal(),
]

FAMILIES = {f.name: f for f in _FAMILY_LIST}
FAMILIES["uniform"] = FAMILIES["uniform_continuous"]


def get_family(name):
    return FAMILIES.get(name)


def linear_logistic(w, x):
    """sigmoid(w . x), with no implicit intercept term.

    Both arguments must be real vectors of equal length; callers append their
    own bias column when they want one.
    """
    wv = _as_vector(w, "weights")
    xv = _as_vector(x, "features")
    if wv.shape[0] != xv.shape[0]:
        raise DimensionMismatch(
            "weights have length %d but features have length %d"
            % (wv.shape[0], xv.shape[0])
        )
    wb = np.ascontiguousarray(wv)
    xb = np.ascontiguousarray(xv)
    return kernels.dot_sigmoid(wb, xb, wb.shape[0])


def student_t_tail(t, dof):
    """Upper-tail probability P(T > t) for a Student-t with dof > 0."""
    dof = _as_float(dof, "degrees of freedom")
    if dof <= 0.0:
        raise DomainError("degrees of freedom must be positive")
    return kernels.student_t_tail(float(t), dof)
