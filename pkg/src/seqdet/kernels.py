"""Backend selection for the trajectory kernel.

The compiled extension is used when it imports; otherwise the numpy
implementation is used.  ``SEQDET_BACKEND=python`` (or ``compiled``) forces a
choice.

Kernel contract
---------------
``run_chunk(K0, K1, K2, E, F, c, tv, r0, h, noise, dt, scheme, rec_every,
keep_final, n_diag) -> (S, final, min_diag, rec)``

* ``r0`` (Ms, B): real block parameters of the initial state, one row per
  charge sector.
* ``E``, ``F`` (Ms, B, B): one-step propagator of a sector and the feed from
  the sector above (``F[-1]`` unused).
* ``noise`` (n, n_steps): Wiener increments, already scaled by ``sqrt(dt)``.
* ``scheme`` 0: measurement map ``K0 + dy K1 + dy^2 K2`` followed by ``E/F``.
  ``scheme`` 1: Euler-Maruyama innovation ``dW (K1 - e) r`` followed by ``E/F``.
* The record is ``dy = e dt + dW`` with ``e = c . r``; ``S = sum h_k dy_k``.
"""
from __future__ import annotations

import os

from . import _kernels_py

__all__ = ["run_chunk", "BACKEND", "available_backends", "get_backend"]

try:
    from . import _sme_kernel
except ImportError:  # extension not built
    _sme_kernel = None


def available_backends() -> list:
    return ["python"] + (["compiled"] if _sme_kernel is not None else [])


def get_backend(name: str | None = None, block_size: int | None = None):
    """Return ``(name, run_chunk)`` for the requested or default backend.

    The compiled kernel is specialized to blocks of ``_sme_kernel.BLOCK_SIZE``
    real parameters; the default choice falls back to numpy for other sizes.
    """
    name = name or os.environ.get("SEQDET_BACKEND", "").strip().lower() or None
    fits = _sme_kernel is not None and (block_size is None or block_size == _sme_kernel.BLOCK_SIZE)
    if name is None:
        name = "compiled" if fits else "python"
    elif name == "compiled" and _sme_kernel is not None and not fits:
        raise ValueError(f"compiled kernel needs block size {_sme_kernel.BLOCK_SIZE}, got {block_size}")
    if name == "compiled":
        if _sme_kernel is None:
            raise ImportError("compiled kernel requested but seqdet._sme_kernel is not built")
        return name, _sme_kernel.run_chunk
    if name == "python":
        return name, _kernels_py.run_chunk
    raise ValueError(f"unknown backend {name!r}; expected 'compiled' or 'python'")


BACKEND, run_chunk = get_backend()
