"""Kernel backend selection.

The compiled Cython backend is preferred when its extension module built;
otherwise the pure-numpy fallback is used. The choice happens once at import.
Set ``CFEDIT_BACKEND`` to ``python`` or ``cython`` to force one explicitly
(``cython`` raises if the extension is unavailable).
"""
from __future__ import annotations

import os

from cfedit._kernels import _pycore

try:
    from cfedit._kernels import _fastcore
except ImportError:
    _fastcore = None


def available_backends() -> tuple[str, ...]:
    return ("python", "cython") if _fastcore is not None else ("python",)


def get_backend(name: str = "auto"):
    """Return a kernel backend module by name ('auto', 'python', 'cython')."""
    if name in ("auto", "", None):
        return _fastcore if _fastcore is not None else _pycore
    if name == "python":
        return _pycore
    if name == "cython":
        if _fastcore is None:
            raise RuntimeError("compiled kernel backend requested but not built")
        return _fastcore
    raise ValueError(f"unknown backend {name!r}")


kernel = get_backend(os.environ.get("CFEDIT_BACKEND", "auto"))
HAVE_COMPILED = _fastcore is not None
BACKEND_NAME = kernel.NAME
