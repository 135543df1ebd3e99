"""Backend selection for the path kernels.

The compiled extension is used when it imports; ``PRWTAIL_PURE_PYTHON=1``
forces the numpy fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _fallback

PURE_ENV = "PRWTAIL_PURE_PYTHON"

try:
    from . import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

fallback = _fallback

if compiled is not None and os.environ.get(PURE_ENV) != "1":
    _active = compiled
    BACKEND = "cython"
else:
    _active = fallback
    BACKEND = "python"

sup_advance = _active.sup_advance
walk_advance = _active.walk_advance
