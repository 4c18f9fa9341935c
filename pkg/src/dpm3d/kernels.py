"""Backend selection for the convection kernel.

The compiled extension is used when it imports; otherwise the NumPy
implementation is used.  Setting ``DPM_PURE_PYTHON=1`` forces the fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py as python_backend

try:  # pragma: no cover - depends on the build
    from . import _kernels as compiled_backend
except ImportError:  # pragma: no cover
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("DPM_PURE_PYTHON"):
    backend = compiled_backend
    BACKEND_NAME = "cython"
else:
    backend = python_backend
    BACKEND_NAME = "numpy"

convection = backend.convection

__all__ = ["convection", "backend", "BACKEND_NAME", "compiled_backend", "python_backend"]
