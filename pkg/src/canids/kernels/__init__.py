"""Kernel backend selection.

The hot inner loops (dense-layer forward/backward, Adam updates) exist
twice: a Cython extension (_core) and a numpy fallback (_numpy). The
compiled module is preferred when importable; CANIDS_KERNELS=numpy or
CANIDS_KERNELS=cython forces a specific backend. benchmarks/bench_kernels.py
compares the two.
"""

import os

from . import _numpy

_requested = os.environ.get("CANIDS_KERNELS", "auto").lower()

if _requested == "numpy":
    _impl = _numpy
elif _requested == "cython":
    from . import _core as _impl
else:
    try:
        from . import _core as _impl
    except ImportError:
        _impl = _numpy

BACKEND = _impl.NAME

linear_forward = _impl.linear_forward
relu = _impl.relu
relu_backward = _impl.relu_backward
linear_backward = _impl.linear_backward
adam_update = _impl.adam_update


def available_backends():
    """Names of importable backends, compiled one first."""
    names = []
    try:
        from . import _core

        names.append(_core.NAME)
    except ImportError:
        pass
    names.append(_numpy.NAME)
    return names
