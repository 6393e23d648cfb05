from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

_BLOCK = 1 << 16


@dataclass
class AdamState:
    lr: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


def _flatten(params):
    if params and isinstance(params[0], (list, tuple)):
        return [p for group in params for p in group]
    return list(params)


def adam_step(params, grads, state: AdamState):
    """Update ``params`` in place with bias-corrected Adam; returns (params, state).

    ``params`` and ``grads`` are matching lists of arrays, or lists of lists as
    held by ``Network.params``.
    """
    flat_p = _flatten(params)
    flat_g = _flatten(grads)
    if len(flat_p) != len(flat_g):
        raise ShapeError(f"{len(flat_p)} parameter arrays but {len(flat_g)} gradients")
    for i, (p, g) in enumerate(zip(flat_p, flat_g)):
        if np.shape(p) != np.shape(g):
            raise ShapeError(f"gradient {i} has shape {np.shape(g)}, parameter has {np.shape(p)}")
    if not state.m:
        state.m = [np.zeros_like(p) for p in flat_p]
        state.v = [np.zeros_like(p) for p in flat_p]
    elif len(state.m) != len(flat_p) or any(m.shape != p.shape for m, p in zip(state.m, flat_p)):
        raise ShapeError("optimiser moments do not match the parameters")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    step = state.lr / c1
    root_c2 = 1.0 / np.sqrt(c2)
    for p, g, m, v in zip(flat_p, flat_g, state.m, state.v):
        g = np.ascontiguousarray(g, dtype=p.dtype).reshape(-1)
        pf, mf, vf = p.reshape(-1), m.reshape(-1), v.reshape(-1)
        if not (np.shares_memory(pf, p) and np.shares_memory(mf, m) and np.shares_memory(vf, v)):
            raise ShapeError("parameters and moments must be contiguous arrays")
        # cache-sized blocks keep the dozen elementwise passes out of main memory
        scratch = np.empty(min(_BLOCK, pf.size), dtype=p.dtype)
        for lo in range(0, pf.size, _BLOCK):
            hi = min(lo + _BLOCK, pf.size)
            pb, gb, mb, vb = pf[lo:hi], g[lo:hi], mf[lo:hi], vf[lo:hi]
            t = scratch[:hi - lo]
            np.multiply(gb, 1.0 - b1, out=t)
            mb *= b1
            mb += t
            np.multiply(gb, gb, out=t)
            t *= 1.0 - b2
            vb *= b2
            vb += t
            np.sqrt(vb, out=t)
            t *= root_c2
            t += state.eps
            np.divide(mb, t, out=t)
            t *= step
            pb -= t
    return params, state
