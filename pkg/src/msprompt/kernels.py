"""Kernel backend selection.

The compiled extension is used when it imports; otherwise the numpy
implementation. Set ``MSPROMPT_PURE_PYTHON=1`` to force the fallback.
"""

import importlib
import os
from types import ModuleType

BACKENDS = ("cython", "python")
_MODULES = {"cython": "msprompt._kernels", "python": "msprompt._kernels_py"}


def load(name: str) -> ModuleType:
    """Import a specific kernel backend by name; raises ImportError if unavailable."""
    if name not in _MODULES:
        raise ValueError(f"unknown kernel backend {name!r}; expected one of {BACKENDS}")
    return importlib.import_module(_MODULES[name])


def available() -> list[str]:
    names = []
    for name in BACKENDS:
        try:
            load(name)
        except ImportError:
            continue
        names.append(name)
    return names


def _select() -> ModuleType:
    if os.environ.get("MSPROMPT_PURE_PYTHON", "") not in ("", "0"):
        return load("python")
    try:
        return load("cython")
    except ImportError:
        return load("python")


impl = _select()
BACKEND = impl.NAME

rescale_clip = impl.rescale_clip
to_byte = impl.to_byte
normalized_difference = impl.normalized_difference
colormap = impl.colormap
