"""Select the compiled transport kernel when available.

Set ``CONFLIMIT_PURE_PYTHON=1`` to force the pure-Python implementation.
"""
from __future__ import annotations

import os

from . import _kernels_py

BACKEND = "python"
transport_pieces = _kernels_py.transport_pieces

if not os.environ.get("CONFLIMIT_PURE_PYTHON"):
    try:
        from . import _kernels  # type: ignore[attr-defined]
    except ImportError:  # extension not built
        pass
    else:
        transport_pieces = _kernels.transport_pieces
        BACKEND = "compiled"

__all__ = ["transport_pieces", "BACKEND"]
