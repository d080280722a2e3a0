"""Hot-kernel dispatch.

The compiled ``_ckernels`` extension is used when it was built; otherwise the
numpy versions in ``_kernels_py`` are used. Setting ``CANET_PURE_PYTHON=1``
forces the numpy versions.
"""

import os

from . import _kernels_py

BACKEND = "python"
_impl = _kernels_py

if os.environ.get("CANET_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as _impl  # noqa: F811

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py

selu = _impl.selu
selu_grad = _impl.selu_grad
adam_update = _impl.adam_update
quantize = _impl.quantize
synthesize = _impl.synthesize
pilot_apply = _impl.pilot_apply
pilot_grad = _impl.pilot_grad

SELU_ALPHA = _kernels_py.SELU_ALPHA
SELU_SCALE = _kernels_py.SELU_SCALE

__all__ = [
    "BACKEND",
    "SELU_ALPHA",
    "SELU_SCALE",
    "adam_update",
    "pilot_apply",
    "pilot_grad",
    "quantize",
    "selu",
    "selu_grad",
    "synthesize",
]
