"""Backend selection for the batch kernels.

The compiled extension is used when importable; set ``FLOWFIELDS_PURE_PYTHON=1``
to force the NumPy implementation.  ``BACKEND`` names the active one.
"""
from __future__ import annotations

import os

from . import _kernel_py

if os.environ.get("FLOWFIELDS_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernel_py
    BACKEND = "numpy"
else:
    try:
        from . import _kernel as _impl  # type: ignore[attr-defined]
        BACKEND = "compiled"
    except ImportError:
        _impl = _kernel_py
        BACKEND = "numpy"

flow_jets = _impl.flow_jets
retard = _impl.retard


def backends() -> dict:
    """All importable backends by name (used by tests and the benchmark)."""
    out = {"numpy": _kernel_py}
    try:
        from . import _kernel  # type: ignore[attr-defined]
        out["compiled"] = _kernel
    except ImportError:
        pass
    return out
