"""Numeric kernel backend selection.

Imports the compiled core when it is built, otherwise the pure-Python twin.
AUSTERE_PURE_PYTHON=1 in the environment forces the fallback (used by the
backend benchmark and by tests that pin a backend).
"""

import os

if os.environ.get("AUSTERE_PURE_PYTHON", "") == "1":
    from austere import _core_py as _impl
else:
    try:
        from austere import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from austere import _core_py as _impl

BACKEND = _impl.BACKEND

sigmoid = _impl.sigmoid
dot_sigmoid = _impl.dot_sigmoid
normal_logpdf = _impl.normal_logpdf
bernoulli_logpmf = _impl.bernoulli_logpmf
gamma_logpdf = _impl.gamma_logpdf
inv_gamma_logpdf = _impl.inv_gamma_logpdf
beta_logpdf = _impl.beta_logpdf
uniform_logpdf = _impl.uniform_logpdf
betainc_reg = _impl.betainc_reg
student_t_tail = _impl.student_t_tail
welford_add = _impl.welford_add
