"""Numba shim and backend selection.

Set HYFERMI_BACKEND=numpy to force the pure-numpy code paths even when
numba is importable, HYFERMI_BACKEND=numba to insist on numba (raises
if it is missing), or leave it unset / "auto" to autodetect.
"""

import os

_choice = os.environ.get("HYFERMI_BACKEND", "auto").strip().lower()
if _choice not in ("auto", "numba", "numpy"):
    raise ValueError(
        f"HYFERMI_BACKEND={_choice!r}: expected 'auto', 'numba' or 'numpy'"
    )

NUMBA_AVAILABLE = False
if _choice in ("auto", "numba"):
    try:
        from numba import njit, prange  # noqa: F401

        NUMBA_AVAILABLE = True
    except ImportError:
        if _choice == "numba":
            raise ImportError(
                "HYFERMI_BACKEND=numba but numba is not importable"
            ) from None

if not NUMBA_AVAILABLE:
    prange = range

    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f


USE_NUMBA = NUMBA_AVAILABLE
BACKEND = "numba" if USE_NUMBA else "numpy"
