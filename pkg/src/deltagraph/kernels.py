"""Kernel backend selection.

The compiled ``_ckernels`` extension is preferred; the pure-Python
``_pykernels`` module is used when the extension is missing or when the
environment variable ``DELTAGRAPH_PURE`` is set to a non-empty value other
than ``0``. Both expose the same functions, so callers can also pick one
explicitly with :func:`get_backend`.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def compiled_available() -> bool:
    return _ckernels is not None


def get_backend(name: str = "auto") -> ModuleType:
    """Return the kernel module for ``name`` (``auto``, ``cython``, ``python``)."""
    if name == "python":
        return _pykernels
    if name == "cython":
        if _ckernels is None:
            raise ImportError("deltagraph._ckernels is not built")
        return _ckernels
    if name != "auto":
        raise ValueError(f"unknown kernel backend {name!r}")
    if os.environ.get("DELTAGRAPH_PURE", "") not in ("", "0"):
        return _pykernels
    return _ckernels if _ckernels is not None else _pykernels


default = get_backend()
