"""Hot-kernel backend selection.

The compiled extension (Cython) is preferred when it imported cleanly; the
NumPy implementation is the fallback. LIDF_KERNELS=numpy|cython forces a
backend, which the test suite uses to check parity between the two.
"""

import os

from . import numpy_backend

try:
    from . import _ckernels
except ImportError:  # extension not built on this install
    _ckernels = None

_FORCED = os.environ.get("LIDF_KERNELS", "").strip().lower()

if _FORCED == "numpy":
    backend = numpy_backend
elif _FORCED == "cython":
    if _ckernels is None:
        raise ImportError(
            "LIDF_KERNELS=cython but the compiled extension is unavailable; "
            "reinstall with a C compiler or unset LIDF_KERNELS"
        )
    backend = _ckernels
elif _FORCED:
    raise ImportError(f"unknown LIDF_KERNELS value {_FORCED!r} (expected 'numpy' or 'cython')")
else:
    backend = _ckernels if _ckernels is not None else numpy_backend

BACKEND_NAME = backend.NAME

im2col1d = backend.im2col1d
col2im1d = backend.col2im1d
im2col2d = backend.im2col2d
col2im2d = backend.col2im2d
maxpool1d_forward = backend.maxpool1d_forward
maxpool1d_backward = backend.maxpool1d_backward
avgpool2d_forward = backend.avgpool2d_forward
avgpool2d_backward = backend.avgpool2d_backward
