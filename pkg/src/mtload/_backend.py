"""Kernel selection: compiled core when importable, numpy fallback otherwise.

Set ``MTLOAD_BACKEND=python`` to force the fallback (``c`` makes a missing
extension an import error).
"""

import os

from . import _kernels_py

_choice = os.environ.get("MTLOAD_BACKEND", "auto").lower()

if _choice not in ("auto", "c", "python"):
    raise ImportError(f"MTLOAD_BACKEND must be auto, c or python, not {_choice!r}")

_ckernels = None
if _choice != "python":
    try:
        from . import _ckernels
    except ImportError:
        if _choice == "c":
            raise

if _ckernels is not None:
    BACKEND = "c"
    rls_update = _ckernels.rls_update
    fuse_step = _ckernels.fuse_step
else:
    BACKEND = "python"
    rls_update = _kernels_py.rls_update
    fuse_step = _kernels_py.fuse_step


def available():
    return ["c", "python"] if _ckernels is not None else ["python"]


def kernels(name):
    """``(rls_update, fuse_step)`` for a named backend."""
    if name == "python":
        return _kernels_py.rls_update, _kernels_py.fuse_step
    if name == "c" and _ckernels is not None:
        return _ckernels.rls_update, _ckernels.fuse_step
    raise ValueError(f"backend {name!r} is not available")
