"""Selects the compiled inner loops when available.

Set ``SUBFBM_PURE_PYTHON=1`` to force the numpy fallback.
"""

import os

from . import _fallback

BACKEND = "python"
weighted_power_sum = _fallback.weighted_power_sum

if os.environ.get("SUBFBM_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _core
    except ImportError:  # extension not built
        pass
    else:
        BACKEND = "cython"
        weighted_power_sum = _core.weighted_power_sum
