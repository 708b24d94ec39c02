"""Select the compiled kernel core or the numpy fallback at import time.

Set ``COVSHIFT_BACKEND=python`` to force the fallback, or ``cython`` to
fail loudly when the extension is unavailable.  ``COVSHIFT_THREADS``
sets the OpenMP thread count used by the compiled loops.
"""
import os

from covshift import _fallback

_requested = os.environ.get("COVSHIFT_BACKEND", "").strip().lower()

impl = None
if _requested != "python":
    try:
        from covshift import _core as impl
    except ImportError:
        if _requested == "cython":
            raise
        impl = None

if impl is None:
    impl = _fallback
    NAME = "python"
else:
    NAME = "cython"


def num_threads():
    try:
        return max(1, int(os.environ.get("COVSHIFT_THREADS", "1")))
    except ValueError:
        return 1


def gaussian_gram(X, Y, sigma):
    return impl.gaussian_gram(X, Y, float(sigma), num_threads())


def gaussian_gram_sym(X, sigma):
    return impl.gaussian_gram_sym(X, float(sigma), num_threads())


def gaussian_expand(X, A, w, sigma):
    return impl.gaussian_expand(X, A, w, float(sigma), num_threads())
