"""Backend selection for the measurement kernel.

The compiled extension is used when it was built; otherwise the numpy
implementation is imported. Set ``GRIDSTATE_PURE_PYTHON=1`` to force the
fallback.
"""
from __future__ import annotations

import os

from . import _kernels_py

_compiled = None
if not os.environ.get("GRIDSTATE_PURE_PYTHON"):
    try:
        from . import _kernels as _compiled  # type: ignore[no-redef]
    except ImportError:
        _compiled = None

BACKENDS = {"python": _kernels_py.polar_model}
if _compiled is not None:
    BACKENDS["cython"] = _compiled.polar_model

BACKEND = "cython" if _compiled is not None else "python"


def polar_model(*args, backend: str | None = None, **kwargs):
    return BACKENDS[backend or BACKEND](*args, **kwargs)
