"""Kernel backend selection: compiled extension when available, else pure Python.

Set GDSERVE_PURE_PYTHON=1 to force the Python implementation (useful for
benchmarking and for testing backend parity).
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("GDSERVE_PURE_PYTHON") == "1":
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels_c as _impl  # type: ignore[attr-defined]
        BACKEND = "c"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

solve_rate = _impl.solve_rate
effective_probs = _impl.effective_probs
dual_probs = _impl.dual_probs
draw_index = _impl.draw_index

__all__ = ["BACKEND", "solve_rate", "effective_probs", "dual_probs", "draw_index"]
