"""Batched rotation/rigid-motion kernels with backend selection.

Imports the compiled extension when it is available and falls back to the
numpy implementation otherwise. Set TRAJFUSE_PURE_PYTHON=1 to force the
fallback (used by the benchmark to compare both paths).
"""

import os

from . import _numpy_backend

if os.environ.get("TRAJFUSE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _numpy_backend
else:
    try:
        from . import _native as _impl
    except ImportError:
        _impl = _numpy_backend

BACKEND_NAME = _impl.BACKEND_NAME
SMALL_ANGLE = _numpy_backend.SMALL_ANGLE

quat_mul = _impl.quat_mul
quat_conj = _impl.quat_conj
quat_normalize = _impl.quat_normalize
quat_rotate = _impl.quat_rotate
quat_to_matrix = _impl.quat_to_matrix
so3_exp = _impl.so3_exp
so3_log = _impl.so3_log
se3_exp = _impl.se3_exp
se3_log = _impl.se3_log


def get_backend(name):
    """Return a backend module by name ('numpy' or 'native')."""
    if name == "numpy":
        return _numpy_backend
    if name == "native":
        from . import _native

        return _native
    raise ValueError(f"unknown kernel backend {name!r}")
