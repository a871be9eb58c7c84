"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy fallback.
Set ``NMQJ_KERNELS=python`` to force the fallback. Callers must go through
this module's attributes (``kernels.rk4_batch(...)``) rather than importing
the functions directly, so that :func:`use_backend` takes effect everywhere.
"""
from __future__ import annotations

import os
from contextlib import contextmanager
from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_NAMES = (
    "matvec_batch",
    "rk4_batch",
    "norm_sq_batch",
    "normalize_batch",
    "expect_batch",
    "counter_uniforms",
    "member_branches",
)

BACKEND = "python"


def available_backends() -> list[str]:
    names = ["python"]
    if _ckernels is not None:
        names.insert(0, "compiled")
    return names


def backend_module(name: str) -> ModuleType:
    if name == "python":
        return _pykernels
    if name == "compiled":
        if _ckernels is None:
            raise RuntimeError("compiled kernels are not available; rebuild the package with Cython")
        return _ckernels
    raise ValueError(f"unknown kernel backend {name!r}")


def use_backend(name: str) -> None:
    """Rebind the module-level kernel functions to backend ``name``."""
    global BACKEND
    mod = backend_module(name)
    g = globals()
    for fn in _NAMES:
        g[fn] = getattr(mod, fn)
    BACKEND = name


@contextmanager
def backend(name: str):
    previous = BACKEND
    use_backend(name)
    try:
        yield
    finally:
        use_backend(previous)


def _default() -> str:
    requested = os.environ.get("NMQJ_KERNELS", "").strip().lower()
    if requested in ("python", "numpy", "fallback"):
        return "python"
    if requested == "compiled" and _ckernels is None:
        raise RuntimeError("NMQJ_KERNELS=compiled but the extension is not built")
    return "compiled" if _ckernels is not None else "python"


matvec_batch = rk4_batch = norm_sq_batch = normalize_batch = None
expect_batch = counter_uniforms = member_branches = None
use_backend(_default())
