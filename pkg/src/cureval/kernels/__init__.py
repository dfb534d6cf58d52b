"""Hot computation kernels with a compiled core and pure-Python fallback.

The compiled extension (``cureval.kernels._fast``) is selected at import
when available; otherwise ``cureval.kernels.pure`` is used.  Set the
environment variable ``CUREVAL_KERNELS=pure`` to force the fallback, or
``CUREVAL_KERNELS=c`` to require the extension (ImportError if missing).

Both backends compute bit-identical results; ``benchmarks/bench_kernels.py``
compares their speed.
"""
from __future__ import annotations

import os

from . import pure as _pure

_requested = os.environ.get("CUREVAL_KERNELS", "auto").strip().lower()

if _requested in ("auto", ""):
    try:
        from . import _fast as _impl
        BACKEND = "c"
    except ImportError:
        _impl = _pure
        BACKEND = "pure"
elif _requested == "c":
    from . import _fast as _impl
    BACKEND = "c"
elif _requested == "pure":
    _impl = _pure
    BACKEND = "pure"
else:
    raise ImportError(
        f"CUREVAL_KERNELS must be 'auto', 'c' or 'pure', got {_requested!r}"
    )

lcs_length = _impl.lcs_length


def ngram_overlap(pred, ref, n):
    try:
        return _impl.ngram_overlap(pred, ref, n)
    except OverflowError:
        # compiled path refuses when the packed key space exceeds 64 bits
        return _pure.ngram_overlap(pred, ref, n)


def clipped_matches(pred, refs, n):
    try:
        return _impl.clipped_matches(pred, refs, n)
    except OverflowError:
        return _pure.clipped_matches(pred, refs, n)


ngram_overlap.__doc__ = _pure.ngram_overlap.__doc__
clipped_matches.__doc__ = _pure.clipped_matches.__doc__
