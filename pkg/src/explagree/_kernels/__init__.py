"""Inner-loop kernels with a compiled backend and a numpy fallback.

The compiled module is used when it imports; set ``EXPLAGREE_PURE_PYTHON=1``
to force the fallback.  ``BACKEND`` names the active one.
"""
import os

from . import _pykernels as python_backend

compiled_backend = None
if os.environ.get("EXPLAGREE_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _ckernels as compiled_backend
    except ImportError:  # extension not built
        compiled_backend = None

_active = compiled_backend or python_backend
BACKEND = "cython" if compiled_backend is not None else "python"

dilate = _active.dilate
erode = _active.erode
pair_counts = _active.pair_counts
otsu_index = _active.otsu_index
shapley_table = _active.shapley_table

__all__ = ["BACKEND", "dilate", "erode", "pair_counts", "otsu_index", "shapley_table",
           "python_backend", "compiled_backend"]
