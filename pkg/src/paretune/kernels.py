"""Kernel backend selection.

The compiled extension is used when it was built; otherwise, or when
``PARETUNE_PURE_PYTHON=1`` is set, the numpy implementations are used.
"""

from __future__ import annotations

import os
from types import ModuleType

from . import _kernels_py

_compiled: ModuleType | None
try:
    from . import _kernels as _compiled  # type: ignore[attr-defined]
except ImportError:
    _compiled = None


def get_backend(name: str | None = None) -> ModuleType:
    """Return the kernel module for ``name`` ("cython" or "python"), or the default."""
    if name is None:
        name = "python" if os.environ.get("PARETUNE_PURE_PYTHON") == "1" or _compiled is None else "cython"
    if name == "python":
        return _kernels_py
    if name == "cython":
        if _compiled is None:
            raise ImportError("compiled kernels are not built; run `pip install -e . --no-build-isolation`")
        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")


def available_backends() -> list[str]:
    return ["python"] + (["cython"] if _compiled is not None else [])


_active = get_backend()
BACKEND = "cython" if _active is _compiled else "python"

real_error_table = _active.real_error_table
widest_feasible_runs = _active.widest_feasible_runs
pareto_mask = _active.pareto_mask
