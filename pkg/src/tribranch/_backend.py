"""Kernel backend selection.

The compiled Cython module is used when it imports; otherwise the numpy
fallback is used. Both expose ``xnor_popcount_gemm`` and ``coo_scatter``.
"""

from types import ModuleType

from . import _fallback
from .errors import ArgumentError

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None

BACKENDS: dict[str, ModuleType] = {"numpy": _fallback}
if _compiled is not None:
    BACKENDS["cython"] = _compiled

DEFAULT = "cython" if _compiled is not None else "numpy"


def get(name: str | None = None) -> ModuleType:
    if name is None:
        name = DEFAULT
    try:
        return BACKENDS[name]
    except KeyError:
        raise ArgumentError(f"unknown or unavailable backend {name!r}; have {sorted(BACKENDS)}") from None
