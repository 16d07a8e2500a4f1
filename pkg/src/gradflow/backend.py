"""Kernel backend selection.

The package ships two interchangeable kernel sets:

* ``compiled`` -- a Cython extension with a fixed left-to-right summation
  order (bit-reproducible across runs and machines with the same build);
* ``python``   -- numpy fallback, used automatically when the extension
  was not built.

The active backend is chosen once at import time.  Set the environment
variable ``GRADFLOW_BACKEND`` to ``compiled`` or ``python`` to force one;
forcing ``compiled`` when the extension is missing raises ImportError
rather than silently degrading.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _compiled = None


def available_backends() -> tuple[str, ...]:
    """Names of the kernel sets importable in this installation."""
    names = ["python"]
    if _compiled is not None:
        names.insert(0, "compiled")
    return tuple(names)


def get_backend(name: str) -> ModuleType:
    """Return the kernel module for ``name`` (``compiled`` or ``python``)."""
    if name == "python":
        return _kernels_py
    if name == "compiled":
        if _compiled is None:
            raise ImportError(
                "the compiled kernel extension is not built; reinstall the "
                "package or set GRADFLOW_BACKEND=python")
        return _compiled
    raise ValueError(f"unknown backend {name!r}; expected compiled|python")


def _select() -> ModuleType:
    forced = os.environ.get("GRADFLOW_BACKEND")
    if forced:
        return get_backend(forced)
    return _compiled if _compiled is not None else _kernels_py


_active = _select()

BACKEND = _active.BACKEND_NAME
matmul = _active.matmul
spmm = _active.spmm
