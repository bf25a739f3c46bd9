"""Kernel backend selection.

The compiled ``_kernels`` extension is used when importable; otherwise (or with
``INSIDERTC_PURE_PYTHON=1``) the numpy fallback takes over.  Both expose
``rk4_x1``, ``simulate_chunk``, ``norm_ppf``, ``path_keys`` and ``uniforms``.
"""
import os

from . import _fallback

try:
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

_FORCE_PYTHON = os.environ.get("INSIDERTC_PURE_PYTHON", "").lower() in ("1", "true", "yes")

if _compiled is not None and not _FORCE_PYTHON:
    impl = _compiled
    BACKEND = "cython"
else:
    impl = _fallback
    BACKEND = "python"


def available_backends():
    names = {"python": _fallback}
    if _compiled is not None:
        names["cython"] = _compiled
    return names


def get_backend(name=None):
    if name is None:
        return impl
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {sorted(available_backends())}") from None
