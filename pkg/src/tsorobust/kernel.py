"""Selects the SC reachability kernel.

The compiled ``_kernel`` extension is used when it was built; otherwise the
pure-Python implementation.  Set ``TSO_ROBUST_KERNEL=python`` to force the
fallback.
"""

import os

from . import _kernel_py

_impl = _kernel_py
if os.environ.get("TSO_ROBUST_KERNEL", "").lower() != "python":
    try:
        from . import _kernel as _impl  # type: ignore[no-redef]
    except ImportError:
        _impl = _kernel_py

NAME = _impl.NAME
successors = _impl.successors
sc_search = _impl.sc_search


def implementations() -> dict:
    """Every importable kernel, keyed by name."""
    out = {"python": _kernel_py}
    try:
        from . import _kernel

        out["cython"] = _kernel
    except ImportError:
        pass
    return out
