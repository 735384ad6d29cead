"""Hot-kernel backend selection.

The compiled Cython extension is preferred when it imports cleanly; the
pure-numpy module is the fallback and the reference for parity tests.
Set ``MAGVFP_FORCE_NUMPY=1`` to skip the compiled backend.
"""

import os

from . import numpy_ops

if os.environ.get("MAGVFP_FORCE_NUMPY", "0") == "1":
    ops = numpy_ops
else:
    try:
        from . import _accel as ops  # type: ignore[no-redef]
    except ImportError:
        ops = numpy_ops

BACKEND = ops.BACKEND_NAME


def get_backend(name=None):
    """Return a kernel module by name ("numpy", "cython" or None for active)."""
    if name is None:
        return ops
    if name == "numpy":
        return numpy_ops
    if name == "cython":
        from . import _accel

        return _accel
    raise ValueError(f"unknown kernel backend {name!r}")
