"""Hot numeric kernels with a numba path and a pure-numpy fallback.

The numba versions are used when numba imports cleanly, unless the
environment variable ``PLATEREC_DISABLE_NUMBA`` is set to a truthy value
(``1``, ``true``, ``yes``). Both implementations stay importable as
``platerec.kernels.numpy_impl`` and ``platerec.kernels.numba_impl`` (the
latter is ``None`` when numba is missing) so they can be compared directly.
"""

import os

from . import _numpy as numpy_impl

_DISABLE = os.environ.get("PLATEREC_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes", "on"}

try:
    from . import _numba as numba_impl
except ImportError:  # pragma: no cover - numba is an optional accelerator
    numba_impl = None

USE_NUMBA = numba_impl is not None and not _DISABLE
BACKEND = "numba" if USE_NUMBA else "numpy"

_impl = numba_impl if USE_NUMBA else numpy_impl

ctc_alpha_beta = _impl.ctc_alpha_beta
# patch extraction is a strided copy; numpy's slab copies beat the JIT loop
im2col3x3 = numpy_impl.im2col3x3
col2im3x3 = _impl.col2im3x3
maxpool2_forward = _impl.maxpool2_forward
maxpool2_backward = _impl.maxpool2_backward
levenshtein = _impl.levenshtein

__all__ = [
    "BACKEND",
    "USE_NUMBA",
    "col2im3x3",
    "ctc_alpha_beta",
    "im2col3x3",
    "levenshtein",
    "maxpool2_backward",
    "maxpool2_forward",
    "numba_impl",
    "numpy_impl",
]
