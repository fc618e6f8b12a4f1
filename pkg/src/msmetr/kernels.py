"""Backend selection for the hot kernels.

The compiled extension is used when it imports; set ``MSMETR_PURE_PYTHON=1``
to force the pure-Python fallback. Both backends produce identical draws for
the same generator state; the deterministic LASSO solver agrees to rounding.
"""
import os

from . import _pykernels

if os.environ.get("MSMETR_PURE_PYTHON"):
    _impl = _pykernels
else:
    try:
        from . import _ckernels as _impl
    except ImportError:  # extension not built
        _impl = _pykernels

BACKEND = _impl.BACKEND

gig = _impl.gig
gig_one = _impl.gig_one
forward_filter = _impl.forward_filter
backward_smooth = _impl.backward_smooth
backward_sample = _impl.backward_sample
categorical = _impl.categorical
discrete_rpsg = _impl.discrete_rpsg
lasso_cd = _impl.lasso_cd


def available_backends():
    """Map backend name to kernel module for every backend that imports."""
    out = {"python": _pykernels}
    try:
        from . import _ckernels
    except ImportError:
        pass
    else:
        out["cython"] = _ckernels
    return out
