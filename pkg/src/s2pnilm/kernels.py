"""Conv1d kernel dispatch.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementation in ``_pykernels``. Set ``S2PNILM_PURE_PYTHON=1`` to force
the fallback.
"""

import logging
import os

import numpy as np

from . import _pykernels

log = logging.getLogger(__name__)

_compiled = None
if not os.environ.get("S2PNILM_PURE_PYTHON"):
    try:
        from . import _ckernels as _compiled
    except ImportError:  # pragma: no cover - depends on the build
        log.debug("compiled kernels unavailable, using numpy fallback")

BACKENDS = {"python": _pykernels}
if _compiled is not None:
    BACKENDS["compiled"] = _compiled

_active = "compiled" if _compiled is not None else "python"


def backend():
    """Name of the kernel backend currently in use."""
    return _active


def set_backend(name):
    """Switch kernels; returns the previously active backend name."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"unknown kernel backend {name!r}; available: {sorted(BACKENDS)}")
    prev, _active = _active, name
    return prev


def _impl(name):
    return BACKENDS[name or _active]


def conv1d_forward(x, w, b, pad_left, l_out, impl=None):
    """Batched correlation: ``out[n, l, o] = b[o] + sum_{k,c} x[n, l+k-pad_left, c] * w[k, c, o]``.

    Taps falling outside ``[0, L)`` read zero.
    """
    x = np.ascontiguousarray(x)
    out = np.empty((x.shape[0], l_out, w.shape[2]), dtype=x.dtype)
    _impl(impl)._forward(x, np.ascontiguousarray(w, dtype=x.dtype),
                         np.ascontiguousarray(b, dtype=x.dtype), pad_left, l_out, out)
    return out


def conv1d_backward(x, w, dout, pad_left, need_dx=True, impl=None):
    """Gradients of :func:`conv1d_forward` given upstream ``dout``.

    Returns ``(dx, dw, db)``; ``dx`` is None when ``need_dx`` is false.
    """
    x = np.ascontiguousarray(x)
    dt = x.dtype
    dout = np.ascontiguousarray(dout, dtype=dt)
    dw = np.zeros(w.shape, dtype=dt)
    db = np.zeros(w.shape[2], dtype=dt)
    dx = np.zeros(x.shape, dtype=dt) if need_dx else None
    _impl(impl)._backward(x, np.ascontiguousarray(w, dtype=dt), dout, pad_left, dw, db, dx)
    return dx, dw, db
