"""Kernel backend selection: the compiled extension when importable, the
numpy fallback otherwise. SDFGUIDE_BACKEND=pure forces the fallback."""

from __future__ import annotations

import os

from . import _pykernels

if os.environ.get("SDFGUIDE_BACKEND", "").lower() == "pure":
    _impl = _pykernels
else:
    try:
        from . import _kernels as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _pykernels

BACKEND = _impl.NAME

crc64 = _impl.crc64
edt_sq = _impl.edt_sq
query_nearest_batch = _impl.query_nearest_batch
query_nearest_one = _impl.query_nearest_one

pure = _pykernels


def get_backend(name: str = "auto"):
    """Return the kernel module for ``name`` in {auto, compiled, pure}."""
    if name in ("auto", BACKEND):
        return _impl
    if name == "pure":
        return _pykernels
    if name == "compiled":
        from . import _kernels  # raises ImportError when unavailable

        return _kernels
    raise ValueError(f"unknown backend {name!r}")
