"""Kernel backend selection.

At import time this module picks the compiled Cython backend when the
extension built, otherwise the pure-numpy fallback. Override with the
``IMAGEDX_KERNELS`` environment variable (``auto`` | ``cython`` |
``python``) or at runtime via :func:`set_backend`. Both backends implement
the identical function surface (see ``pykernels`` for the contract).
"""

from __future__ import annotations

import os
from types import ModuleType

from imagedx.errors import KernelBackendError
from imagedx.nn import pykernels

try:
    from imagedx.nn import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS: dict[str, ModuleType | None] = {"python": pykernels, "cython": _ckernels}

_active_name: str = "python"
_active: ModuleType = pykernels


def available_backends() -> tuple[str, ...]:
    return tuple(name for name, mod in _BACKENDS.items() if mod is not None)


def set_backend(name: str) -> str:
    """Activate a backend by name; returns the previously active name."""
    global _active_name, _active
    if name == "auto":
        name = "cython" if _BACKENDS["cython"] is not None else "python"
    if name not in _BACKENDS:
        raise KernelBackendError(f"unknown kernel backend {name!r}")
    module = _BACKENDS[name]
    if module is None:
        raise KernelBackendError(
            f"kernel backend {name!r} unavailable (extension not built)"
        )
    previous = _active_name
    _active_name, _active = name, module
    return previous


def backend_name() -> str:
    return _active_name


def im2col(xp, kh, kw, sh, sw, oh, ow):
    return _active.im2col(xp, kh, kw, sh, sw, oh, ow)


def col2im(cols, n, c, hp, wp, kh, kw, sh, sw, oh, ow):
    return _active.col2im(cols, n, c, hp, wp, kh, kw, sh, sw, oh, ow)


def maxpool_forward(xp, kh, kw, sh, sw, oh, ow):
    return _active.maxpool_forward(xp, kh, kw, sh, sw, oh, ow)


def maxpool_backward(dout, argmax, hp, wp, kh, kw, sh, sw):
    return _active.maxpool_backward(dout, argmax, hp, wp, kh, kw, sh, sw)


set_backend(os.environ.get("IMAGEDX_KERNELS", "auto").lower())
