"""Kernel backend selection.

The compiled extension is used when importable; ``MULTIFID_KERNEL=python``
forces the pure-Python fallback. Both expose ``CompiledSystem`` with the
same constructor and methods.
"""
from __future__ import annotations

import importlib
import os

from . import _pykernels


def load_backend(name: str | None = None):
    """Return the kernel module for ``name`` ('cython', 'python' or None for auto)."""
    name = name or os.environ.get("MULTIFID_KERNEL", "auto")
    if name == "python":
        return _pykernels
    try:
        return importlib.import_module("multifid._ckernels")
    except ImportError:
        if name == "cython":
            raise
        return _pykernels


backend = load_backend()
BACKEND = backend.BACKEND
CompiledSystem = backend.CompiledSystem


def compiled_available() -> bool:
    try:
        importlib.import_module("multifid._ckernels")
    except ImportError:
        return False
    return True
