"""Backend selection for the hot loops.

The compiled extension is used when it imports; otherwise the numpy versions
in ``_pykernels`` take over.  Setting ``REPLAYLAB_PURE_PYTHON=1`` forces the
fallback.  ``BACKEND`` names the active choice.
"""

import os

from . import _pykernels as python_backend

compiled_backend = None
if not os.environ.get("REPLAYLAB_PURE_PYTHON"):
    try:
        from . import _kernels as compiled_backend
    except ImportError:
        compiled_backend = None

_active = compiled_backend if compiled_backend is not None else python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

tree_sample = _active.tree_sample
band_accumulate = _active.band_accumulate
staged_accumulate = _active.staged_accumulate

__all__ = [
    "BACKEND",
    "band_accumulate",
    "compiled_backend",
    "python_backend",
    "staged_accumulate",
    "tree_sample",
]
