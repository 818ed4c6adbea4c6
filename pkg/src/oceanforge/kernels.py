"""Backend selection for the hot kernels.

The compiled extension is used when it imports; otherwise (or when
``OCEANFORGE_PURE_PYTHON=1``) the pure-Python module is used. Both expose
the same functions with identical semantics.
"""

import os

from . import _kernels_py

if os.environ.get("OCEANFORGE_PURE_PYTHON", "") not in ("", "0"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"

sixbit_unpack = _impl.sixbit_unpack
sixbit_pack = _impl.sixbit_pack
read_uint = _impl.read_uint
read_int = _impl.read_int
pessimistic_ranks = _impl.pessimistic_ranks


def available_backends() -> dict:
    backends = {"python": _kernels_py}
    try:
        from . import _kernels

        backends["cython"] = _kernels
    except ImportError:
        pass
    return backends
