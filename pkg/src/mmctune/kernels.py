"""Backend selection for the hot field-evaluation kernels.

Prefers the compiled extension when it is importable; otherwise (or when the
``MMCTUNE_PURE`` environment variable is set to a truthy value) the numpy
implementation is used.  Both backends expose the same three functions and
agree to floating-point roundoff.
"""

from __future__ import annotations

import os

from . import _kernels_py

_FORCE_PURE = os.environ.get("MMCTUNE_PURE", "").strip().lower() in {"1", "true", "yes", "on"}

if not _FORCE_PURE:
    try:
        from . import _kernels as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "pure"
else:
    _impl = _kernels_py
    BACKEND = "pure"

HAVE_COMPILED = BACKEND == "compiled"

phi_one = _impl.phi_one
phi_max = _impl.phi_max
component_fd_grad = _impl.component_fd_grad


def backends() -> dict[str, object]:
    """All importable kernel backends, keyed by name (used by the benchmark)."""
    found: dict[str, object] = {"pure": _kernels_py}
    try:
        from . import _kernels

        found["compiled"] = _kernels
    except ImportError:
        pass
    return found
