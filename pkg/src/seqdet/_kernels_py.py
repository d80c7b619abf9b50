"""Pure-numpy trajectory kernel, vectorized across the trajectories of a chunk.

Semantics match ``_sme_kernel.run_chunk`` exactly; see :mod:`seqdet.kernels`.
"""
from __future__ import annotations

import numpy as np


def run_chunk(K0, K1, K2, E, F, c, tv, r0, h, noise, dt, scheme=0, rec_every=0, keep_final=False, n_diag=0):
    n, n_steps = noise.shape
    Ms, B = r0.shape
    r = np.repeat(r0[None], n, axis=0)
    S = np.zeros(n)
    min_diag = np.full(n, np.inf)
    rec = np.empty((n, n_steps // rec_every)) if rec_every > 0 else None
    for k in range(n_steps):
        e = np.einsum("nmb,b->n", r, c)
        dW = noise[:, k]
        dy = e * dt + dW
        if scheme == 0:
            y = r @ K0.T + dy[:, None, None] * (r @ K1.T) + (dy * dy)[:, None, None] * (r @ K2.T)
        else:
            y = r + dW[:, None, None] * (r @ K1.T - e[:, None, None] * r)
        out = np.einsum("mij,nmj->nmi", E, y)
        out[:, :-1] += np.einsum("mij,nmj->nmi", F[:-1], y[:, 1:])
        out /= np.einsum("nmb,b->n", out, tv)[:, None, None]
        r = out
        S += h[k] * dy
        if scheme != 0 and n_diag:
            np.minimum(min_diag, r[:, :, :n_diag].min(axis=(1, 2)), out=min_diag)
        if rec is not None and (k + 1) % rec_every == 0:
            rec[:, k // rec_every] = dy / dt
    return S, (r if keep_final else None), min_diag, rec
