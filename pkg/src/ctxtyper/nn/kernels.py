"""Sequential GRU recurrence kernels, JIT compiled when possible.

Only the per-timestep loops live here; everything batched or embarrassingly
parallel stays vectorized numpy in the model module. Set CTXTYPER_BACKEND
to "numpy" to force the pure-numpy fallback; anything else (or unset) uses
numba when it is importable. Both paths run the same source, so results are
bitwise-comparable up to the usual float reassociation noise (no fastmath).
"""
from __future__ import annotations

import logging
import os

import numpy as np

log = logging.getLogger(__name__)

_REQUESTED = os.environ.get("CTXTYPER_BACKEND", "numba").strip().lower()

if _REQUESTED == "numpy":
    _HAVE_NUMBA = False
else:
    try:
        from numba import njit

        _HAVE_NUMBA = True
    except ImportError:  # pragma: no cover - depends on the environment
        _HAVE_NUMBA = False
        log.warning("numba unavailable, falling back to pure numpy kernels")

USING_NUMBA = _HAVE_NUMBA


def backend_name() -> str:
    return "numba" if USING_NUMBA else "numpy"


def _gru_forward_core(xz, xr, xh, u_z, u_r, u_h, b_z, b_r, b_h):
    """Run the gated recurrence over precomputed input projections.

    xz/xr/xh are (T, H) rows of W.x per gate. Returns the state sequence
    and the per-step gate activations needed by the backward pass. The
    initial state is zero.
    """
    steps = xz.shape[0]
    hidden = b_z.shape[0]
    states = np.empty((steps, hidden))
    update = np.empty((steps, hidden))
    reset = np.empty((steps, hidden))
    candidate = np.empty((steps, hidden))
    prev_states = np.empty((steps, hidden))
    h = np.zeros(hidden)
    for t in range(steps):
        prev_states[t] = h
        z = 1.0 / (1.0 + np.exp(-(xz[t] + np.dot(u_z, h) + b_z)))
        r = 1.0 / (1.0 + np.exp(-(xr[t] + np.dot(u_r, h) + b_r)))
        c = np.tanh(xh[t] + np.dot(u_h, r * h) + b_h)
        h = z * h + (1.0 - z) * c
        update[t] = z
        reset[t] = r
        candidate[t] = c
        states[t] = h
    return states, update, reset, candidate, prev_states


def _gru_backward_core(d_states, update, reset, candidate, prev_states, u_z_t, u_r_t, u_h_t):
    """Backpropagate through the recurrence.

    d_states holds dLoss/d h_t from everything downstream of each state.
    Returns per-step gradients at the three pre-activations, from which the
    caller recovers all weight gradients with plain matrix products.
    """
    steps, hidden = d_states.shape
    grad_az = np.empty((steps, hidden))
    grad_ar = np.empty((steps, hidden))
    grad_ah = np.empty((steps, hidden))
    carry = np.zeros(hidden)
    for t in range(steps - 1, -1, -1):
        total = d_states[t] + carry
        z = update[t]
        r = reset[t]
        c = candidate[t]
        h_prev = prev_states[t]
        d_candidate = total * (1.0 - z)
        d_ah = d_candidate * (1.0 - c * c)
        d_rh = np.dot(u_h_t, d_ah)
        d_ar = (d_rh * h_prev) * (r * (1.0 - r))
        d_az = (total * (h_prev - c)) * (z * (1.0 - z))
        carry = total * z + d_rh * r + np.dot(u_r_t, d_ar) + np.dot(u_z_t, d_az)
        grad_az[t] = d_az
        grad_ar[t] = d_ar
        grad_ah[t] = d_ah
    return grad_az, grad_ar, grad_ah


# Undecorated references stay importable for parity tests and benchmarks.
gru_forward_core_py = _gru_forward_core
gru_backward_core_py = _gru_backward_core

if USING_NUMBA:
    gru_forward_core = njit(cache=True)(_gru_forward_core)
    gru_backward_core = njit(cache=True)(_gru_backward_core)
else:
    gru_forward_core = _gru_forward_core
    gru_backward_core = _gru_backward_core


def warmup() -> None:
    """Trigger JIT compilation on tiny inputs so timed paths stay clean."""
    t, h = 2, 3
    proj = np.zeros((t, h))
    mat = np.eye(h)
    vec = np.zeros(h)
    states, update, reset, candidate, prev = gru_forward_core(
        proj, proj, proj, mat, mat, mat, vec, vec, vec
    )
    gru_backward_core(np.ones((t, h)), update, reset, candidate, prev, mat, mat, mat)
