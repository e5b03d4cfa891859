"""Kernel backend selection.

Every hot numeric loop in :mod:`ambiseg.kernels` ships in two flavors: a
numba ``@njit`` kernel and a pure-numpy fallback.  The environment variable
``AMBISEG_BACKEND`` picks one at import time:

* unset / ``"numba"`` -- use numba kernels (falls back to numpy with a
  warning when numba is not importable and the variable is unset),
* ``"numpy"``         -- force the pure-numpy implementations.

Both backends produce identical kNN / FPS / pooling results; transcendental
values (exp, log) may differ in the last ulp between backends, which is why
per-run determinism is only guaranteed for a fixed backend.
"""

import os
import warnings

_requested = os.environ.get("AMBISEG_BACKEND", "").strip().lower()

if _requested not in ("", "numba", "numpy"):
    raise RuntimeError(
        f"AMBISEG_BACKEND must be 'numba' or 'numpy', got {_requested!r}"
    )

if _requested == "numpy":
    NUMBA_AVAILABLE = False
else:
    try:
        import numba  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        if _requested == "numba":
            raise
        warnings.warn("numba not importable, using pure-numpy kernels")
        NUMBA_AVAILABLE = False

ACTIVE_BACKEND = "numba" if NUMBA_AVAILABLE else "numpy"
