"""Backend selection for the hot loops.

The compiled extension ``_ckernels`` is used when it imports; otherwise, or
when ``BLOCH_HS_PURE_PYTHON`` is set to a non-empty value other than ``0``,
the NumPy twins in ``_pykernels`` are used.
"""

from __future__ import annotations

import os

from . import _pykernels


def _want_pure() -> bool:
    return os.environ.get("BLOCH_HS_PURE_PYTHON", "") not in ("", "0")


def load(pure: bool | None = None):
    """Kernel module: compiled unless ``pure`` (or the env var) asks otherwise."""
    if pure if pure is not None else _want_pure():
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        return _pykernels
    return _ckernels


_impl = load()
BACKEND = "python" if _impl is _pykernels else "compiled"

greedy_cover = _impl.greedy_cover
locate = _impl.locate
bloch_sum = _impl.bloch_sum
