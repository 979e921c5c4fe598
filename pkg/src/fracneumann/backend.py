"""Backend selection: compiled extension if built, numpy fallback otherwise.

``benchmarks/bench_backends.py`` compares the two implementations head to
head; tests assert they agree to roundoff.
"""

try:
    from . import _accel as _impl

    BACKEND = "cython"
except ImportError:  # extension not built
    from . import _accel_py as _impl

    BACKEND = "python"

from . import _accel_py as python_impl


def backend_name() -> str:
    return BACKEND


def power_pair_accumulate(A, x, y, w, psi, idx, coeff, expo):
    _impl.power_pair_accumulate(A, x, y, w, psi, idx, coeff, expo)


def weighted_pair_accumulate(A, kw, psi, idx):
    _impl.weighted_pair_accumulate(A, kw, psi, idx)
