"""Backend selection for the hot kernels.

The compiled ``_kernels`` extension is used when it imports; otherwise the
pure-Python module is used. Set ``IMBFP_PURE=1`` to force the fallback.
"""

import os

from . import _kernels_py

BACKENDS = {"python": _kernels_py}

try:
    from . import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None
else:
    BACKENDS["compiled"] = _compiled

if _compiled is not None and os.environ.get("IMBFP_PURE", "") in ("", "0"):
    BACKEND = "compiled"
    _impl = _compiled
else:
    BACKEND = "python"
    _impl = _kernels_py

NanoTimeError = _kernels_py.NanoTimeError
parse_nanotime = _impl.parse_nanotime
scan_imbalances = _impl.scan_imbalances
accumulate = _impl.accumulate


def get_backend(name=None):
    """Return the kernel module called ``name`` (default: the active one)."""
    if name is None:
        return _impl
    try:
        return BACKENDS[name]
    except KeyError:
        raise ValueError(f"kernel backend {name!r} is not available; have {sorted(BACKENDS)}") from None
