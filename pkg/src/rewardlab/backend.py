"""Numeric backend selection.

The MLP hot path has two interchangeable implementations: compiled Cython
kernels (rewardlab._kernels, built at install time) and a pure numpy
fallback.  The compiled one is preferred when importable; set
REWARDLAB_BACKEND=python or REWARDLAB_BACKEND=compiled to force a choice.
"""

from __future__ import annotations

import os

from rewardlab import _numpy_backend

try:
    from rewardlab import _kernels as _compiled
except ImportError:
    _compiled = None

_FORCED = os.environ.get("REWARDLAB_BACKEND", "").strip().lower()


def get_backend(name: str | None = None):
    """Return a backend module by name ('python', 'compiled', or None for
    the active default)."""
    if name in (None, "", "active"):
        return _ACTIVE
    if name in ("python", "numpy"):
        return _numpy_backend
    if name in ("compiled", "cython"):
        if _compiled is None:
            raise ImportError(
                "compiled backend requested but rewardlab._kernels is not built"
            )
        return _compiled
    raise ValueError(f"unknown backend {name!r}")


def available_backends() -> list[str]:
    names = ["python"]
    if _compiled is not None:
        names.append("compiled")
    return names


if _FORCED in ("python", "numpy"):
    _ACTIVE = _numpy_backend
elif _FORCED in ("compiled", "cython"):
    if _compiled is None:
        raise ImportError(
            "REWARDLAB_BACKEND=compiled but rewardlab._kernels is not built"
        )
    _ACTIVE = _compiled
else:
    _ACTIVE = _compiled if _compiled is not None else _numpy_backend

ACTIVE_NAME = _ACTIVE.NAME
