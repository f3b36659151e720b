"""Kernel backend selection.

The compiled extension is preferred when it imported cleanly; the pure
NumPy implementation is the fallback.  ``LABGATE_BACKEND=python`` forces
the fallback (used by the parity tests and the benchmark), and
``LABGATE_BACKEND=compiled`` fails loudly instead of silently degrading.

Whichever backend is selected stays fixed for the life of the process,
so repeated identical calls run the exact same code path.
"""

from __future__ import annotations

import os

from labgate import _purekernels

_requested = os.environ.get("LABGATE_BACKEND", "")

if _requested == "python":
    _impl = _purekernels
    BACKEND = "python"
else:
    try:
        from labgate import _kernels as _impl  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        if _requested == "compiled":
            raise
        _impl = _purekernels
        BACKEND = "python"

GAUSSIAN = _purekernels.GAUSSIAN
LORENTZIAN = _purekernels.LORENTZIAN
VOIGT = _purekernels.VOIGT

wofz_re = _impl.wofz_re
profile_eval = _impl.profile_eval
despike = _impl.despike
sum_sq_diff = _impl.sum_sq_diff
