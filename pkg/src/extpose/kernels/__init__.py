"""Batch kernels for Monte-Carlo work.

The numba versions are used when numba is importable and
``EXTPOSE_DISABLE_NUMBA`` is unset; both backends expose the same functions
and are tested against each other.
"""
from extpose._accel import USE_NUMBA
from extpose.kernels import _numpy

if USE_NUMBA:
    from extpose.kernels import _numba as _backend

    BACKEND = "numba"
else:
    _backend = _numpy
    BACKEND = "numpy"

so3_exp_batch = _backend.so3_exp_batch
so3_log_batch = _backend.so3_log_batch
se23_exp_batch = _backend.se23_exp_batch
se23_log_batch = _backend.se23_log_batch
propagate_tangent_noise = _backend.propagate_tangent_noise
preintegrate_noisy = _backend.preintegrate_noisy

__all__ = [
    "BACKEND",
    "so3_exp_batch",
    "so3_log_batch",
    "se23_exp_batch",
    "se23_log_batch",
    "propagate_tangent_noise",
    "preintegrate_noisy",
]
