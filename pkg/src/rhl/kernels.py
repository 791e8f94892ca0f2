"""Backend selection for the numerical kernels.

The compiled extension ``rhl._core`` is used when importable; otherwise, or
when ``RHL_PURE_PYTHON=1`` is set, the numpy implementation in
``rhl._core_py`` takes over.  ``BACKEND`` names the active one.
"""

import os

from . import _core_py

if os.environ.get("RHL_PURE_PYTHON") == "1":
    _impl = _core_py
    BACKEND = "python"
else:
    try:
        from . import _core as _impl
        BACKEND = "compiled"
    except ImportError:  # extension not built
        _impl = _core_py
        BACKEND = "python"

risk_set_sweep = _impl.risk_set_sweep
fc_slopes = _impl.fc_slopes

__all__ = ["BACKEND", "risk_set_sweep", "fc_slopes"]
