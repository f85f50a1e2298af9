"""Kernel backend selection.

The numeric hot spots (convolution, pooling, bilinear warps, window
filters) exist twice: once as vectorized numpy and once as numba-compiled
loops.  The environment variable ``FEATMIMIC_BACKEND`` picks the path:

* unset or ``auto``: numba when importable, numpy otherwise
* ``numba``: force numba, fail loudly if it cannot be imported
* ``numpy``: force the pure-numpy fallback

The choice is read once at import time; results are deterministic within
either backend.
"""

import os

try:
    import numba  # noqa: F401

    HAS_NUMBA = True
except ImportError:
    HAS_NUMBA = False

_CHOICE = os.environ.get("FEATMIMIC_BACKEND", "auto").strip().lower() or "auto"

if _CHOICE not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"FEATMIMIC_BACKEND must be 'auto', 'numba' or 'numpy', got {_CHOICE!r}"
    )
if _CHOICE == "numba" and not HAS_NUMBA:
    raise ImportError("FEATMIMIC_BACKEND=numba but numba is not importable")

USE_NUMBA = _CHOICE == "numba" or (_CHOICE == "auto" and HAS_NUMBA)


def active_backend() -> str:
    """Name of the kernel implementation in use ('numba' or 'numpy')."""
    return "numba" if USE_NUMBA else "numpy"
