"""Hot loops for the time-domain simulator.

The compiled Cython kernel is used when it has been built; otherwise the
numpy implementation is selected.  Set ``PADL_KERNEL=python`` to force the
fallback.
"""

import os

from . import _rk4_py

try:
    from . import _rk4 as _compiled
except ImportError:  # extension not built
    _compiled = None

if _compiled is not None and os.environ.get("PADL_KERNEL", "").lower() != "python":
    rk4_linear = _compiled.rk4_linear
    BACKEND = "cython"
else:
    rk4_linear = _rk4_py.rk4_linear
    BACKEND = "python"

rk4_linear_py = _rk4_py.rk4_linear
rk4_linear_compiled = None if _compiled is None else _compiled.rk4_linear

__all__ = ["BACKEND", "rk4_linear", "rk4_linear_py", "rk4_linear_compiled"]
