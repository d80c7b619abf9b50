"""Excitation-sector decomposition of the density matrix.

Every Hamiltonian term conserves M = n_resonator + [atom in |2>], and each
dissipator either keeps M or lowers it by one on both sides of rho.  The
density matrix therefore splits into blocks rho[M, M'] that are only fed from
rho[M + 1, M' + 1].  When a source mode is present the cascaded coupling also
conserves K = n_source + [atom excited], so only elements with equal K on both
sides are ever populated.

:class:`SectorPropagator` stores the exact short-time propagator of each block
chain, obtained from one batched matrix exponential of a block-bidiagonal
generator.  The result is exact for the fast coherent dynamics regardless of
step size; the only error comes from cutting the feed chain at ``depth``.  It
is of order ``(rate * step) ** depth`` per step, so ``step ** (depth - 1)`` over
a fixed window.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatchError, InvariantViolation, SubsystemError
from .hilbert import DensityMatrix, HilbertSpace

__all__ = ["SectorLayout", "SectorPropagator", "excitation_charges"]


def excitation_charges(space: HilbertSpace):
    """Per-basis-state charge M and coherence label K (``-1`` if outside the layout)."""
    grids = np.meshgrid(*[np.arange(d) for d in space.dims], indexing="ij")
    coords = {lab: g.ravel() for lab, g in zip(space.labels, grids)}
    n = coords["resonator"]
    atom = coords["atom"]
    charge = n + (atom == 2)
    if "source" in coords:
        label = coords["source"] + (atom >= 1)
        label = np.where(label <= 1, label, -1)
    else:
        label = np.zeros_like(n)
    return charge.astype(int), label.astype(int)


@dataclass(frozen=True, eq=False)
class SectorLayout:
    """Index bookkeeping for the block decomposition.

    Attributes
    ----------
    slots : ndarray, shape (n_sectors, S)
        Basis index of each slot in each charge sector; ``space.dim`` marks an
        empty slot.
    slot_labels : ndarray, shape (n_sectors, S)
        Coherence label of each slot (``-1`` for empty slots).
    kept : ndarray, shape (B,)
        Flattened ``i * S + j`` slot pairs stored per block.
    """

    space: HilbertSpace
    slots: np.ndarray
    slot_labels: np.ndarray
    kept: np.ndarray

    @classmethod
    def from_space(cls, space: HilbertSpace) -> "SectorLayout":
        charge, label = excitation_charges(space)
        inside = label >= 0
        res = space.index("resonator")
        coords = np.array(np.unravel_index(np.arange(space.dim), space.dims))
        # one slot per non-resonator configuration; its photon number is fixed by M
        keys = sorted({(int(label[b]),) + tuple(np.delete(coords[:, b], res)) for b in np.flatnonzero(inside)})
        S = len(keys)
        n_sec = int(charge[inside].max()) + 1
        slots = np.full((n_sec, S), space.dim, dtype=int)
        labs = np.full((n_sec, S), -1, dtype=int)
        lookup = {tuple(coords[:, b]): b for b in np.flatnonzero(inside)}
        atom = space.index("atom") - (1 if space.index("atom") > res else 0)
        for k, key in enumerate(keys):
            rest = list(key[1:])
            for m in range(n_sec):
                n = m - (rest[atom] == 2)
                full = tuple(rest[:res] + [n] + rest[res:])
                b = lookup.get(full)
                if b is not None:
                    slots[m, k] = b
                    labs[m, k] = key[0]
        ref = np.array([key[0] for key in keys])
        kept = np.array([i * S + j for i in range(S) for j in range(S) if ref[i] == ref[j]], dtype=int)
        for a in (slots, labs, kept):
            a.setflags(write=False)
        return cls(space, slots, labs, kept)

    @property
    def n_sectors(self) -> int:
        return self.slots.shape[0]

    @property
    def n_slots(self) -> int:
        return self.slots.shape[1]

    @property
    def block_size(self) -> int:
        return len(self.kept)

    def to_dense(self, x: np.ndarray) -> np.ndarray:
        """Assemble the full matrix from blocks ``x[M, M', b]``."""
        Ms, S, dim = self.n_sectors, self.n_slots, self.space.dim
        if x.shape != (Ms, Ms, self.block_size):
            raise DimensionMismatchError(f"block array shape {x.shape} does not match layout")
        blk = np.zeros((Ms, Ms, S * S), complex)
        blk[:, :, self.kept] = x
        blk = blk.reshape(Ms, Ms, S, S)
        rows = np.broadcast_to(self.slots[:, None, :, None], blk.shape)
        cols = np.broadcast_to(self.slots[None, :, None, :], blk.shape)
        rho = np.zeros((dim + 1, dim + 1), complex)
        np.add.at(rho, (rows, cols), blk)
        return rho[:dim, :dim]

    def from_dense(self, rho, atol: float = 1e-12) -> np.ndarray:
        """Blocks of a dense matrix; raises if weight lies outside the layout."""
        r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
        Ms, S = self.n_sectors, self.n_slots
        pad = np.pad(r, ((0, 1), (0, 1)))
        blk = pad[self.slots[:, None, :, None], self.slots[None, :, None, :]].reshape(Ms, Ms, S * S)
        x = blk[:, :, self.kept].copy()
        lost = np.abs(r).sum() - np.abs(x).sum()
        if lost > atol * max(1.0, np.abs(r).sum()):
            raise InvariantViolation(f"state has weight {lost:.3g} outside the sector layout")
        return x

    def diagonal_blocks(self, rho) -> np.ndarray:
        """The ``M = M'`` blocks of a dense matrix, shape ``(n_sectors, B)``.

        Coherences between sectors are dropped; use this only for dynamics
        and observables that never mix sectors.
        """
        r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
        S = self.n_slots
        pad = np.pad(r, ((0, 1), (0, 1)))
        blk = pad[self.slots[:, :, None], self.slots[:, None, :]].reshape(self.n_sectors, S * S)
        return blk[:, self.kept].copy()

    def diagonal_trace(self, x: np.ndarray) -> float:
        """Trace from the ``M = M'`` blocks (``x`` may be full or diagonal-only)."""
        d = x if x.ndim == 2 else np.einsum("mmb->mb", x)
        return float(d[:, self._diag_pos].real.sum())

    @property
    def _diag_pos(self) -> np.ndarray:
        S = self.n_slots
        return np.flatnonzero(self.kept // S == self.kept % S)

    def reduction_map(self, keep):
        """Index map turning blocks into the reduced matrix of ``keep``.

        ``keep`` is a label or a sequence of labels (kept in space order).
        Returns ``(target, source, dim)`` so that the reduced matrix is
        ``bincount(target, weights=x.ravel()[source])`` reshaped to ``(dim, dim)``.
        """
        sp = self.space
        keep = (keep,) if isinstance(keep, str) else tuple(keep)
        for lab in keep:
            if lab not in sp.labels:
                raise SubsystemError(lab)
        kpos = [i for i, lab in enumerate(sp.labels) if lab in keep]
        rpos = [i for i, lab in enumerate(sp.labels) if lab not in keep]
        dims = np.array(sp.dims)
        Ms, S, B = self.n_sectors, self.n_slots, self.block_size
        idx = np.where(self.slots < sp.dim, self.slots, 0)
        coords = np.array(np.unravel_index(idx, sp.dims))

        def flat(pos):
            if not pos:
                return np.zeros(idx.shape, dtype=int)
            return np.ravel_multi_index(tuple(coords[pos]), tuple(dims[pos]))

        own, rest = flat(kpos), flat(rpos)
        d_keep = int(np.prod(dims[kpos]))
        valid = self.slots < sp.dim
        ki, kj = self.kept // S, self.kept % S
        m = np.arange(Ms)[:, None, None]
        n = np.arange(Ms)[None, :, None]
        ok = valid[m, ki] & valid[n, kj] & (rest[m, ki] == rest[n, kj])
        tgt = own[m, ki] * d_keep + own[n, kj]
        src = (m * Ms + n) * B + np.arange(B)[None, None, :]
        return tgt[ok].ravel(), src[ok].ravel(), d_keep

    def reduced(self, x: np.ndarray, keep="resonator") -> np.ndarray:
        """Reduced density matrix of ``keep`` straight from blocks."""
        key = (keep,) if isinstance(keep, str) else tuple(keep)
        cache = self.__dict__.setdefault("_red_cache", {})
        if key not in cache:
            cache[key] = self.reduction_map(key)
        tgt, src, d = cache[key]
        w = x.ravel()[src]
        re = np.bincount(tgt, weights=w.real, minlength=d * d)
        im = np.bincount(tgt, weights=w.imag, minlength=d * d)
        return (re + 1j * im).reshape(d, d)

    def real_basis(self) -> np.ndarray:
        """Matrix ``T`` with ``x[M, M] = T @ r`` for real ``r`` of a Hermitian block."""
        S, B = self.n_slots, self.block_size
        where = {int(k): b for b, k in enumerate(self.kept)}
        T = np.zeros((B, B), complex)
        col = 0
        for k in self.kept:
            i, j = divmod(int(k), S)
            if i == j:
                T[where[k], col] = 1.0
                col += 1
        for k in self.kept:
            i, j = divmod(int(k), S)
            if i < j:
                kt = j * S + i
                T[where[k], col] = 1.0
                T[where[kt], col] = 1.0
                T[where[k], col + 1] = 1j
                T[where[kt], col + 1] = -1j
                col += 2
        return T


class SectorPropagator:
    """Exact-in-time block propagator for a Lindblad generator.

    Parameters
    ----------
    terms : list of (X, Y)
        Superoperator in the form ``L(rho) = sum X rho Y`` on ``layout.space``.
    layout : SectorLayout
    step : float
        Time step of the stored propagator.
    depth : int
        Number of chained blocks kept in each generator (2 or more).
    diagonal_only : bool
        Only build propagators for the ``M = M'`` blocks.
    """

    def __init__(self, terms, layout: SectorLayout, step: float, depth: int = 3, diagonal_only: bool = False):
        if step <= 0:
            raise ValueError("step must be positive")
        if depth < 2:
            raise ValueError("depth must be at least 2")
        self.layout = layout
        self.step = float(step)
        self.depth = int(depth)
        self.diagonal_only = bool(diagonal_only)
        self._validate(terms)
        self.A, self.J = self._build(terms)
        self._props = {}
        self.P = self._propagators(self.step)

    # -- construction -------------------------------------------------
    def _validate(self, terms):
        sp = self.layout.space
        charge, label = excitation_charges(sp)
        inside = label >= 0
        for X, Y in terms:
            X = np.asarray(X)
            Y = np.asarray(Y)
            if X.shape != (sp.dim, sp.dim) or Y.shape != (sp.dim, sp.dim):
                raise DimensionMismatchError("superoperator term does not match the layout space")
            xi, xk = np.nonzero(X)
            yl, yj = np.nonzero(Y)
            xs = set((charge[xi] - charge[xk])[inside[xk]].tolist())
            ys = set((charge[yj] - charge[yl])[inside[yl]].tolist())
            shifts = xs | ys
            if not shifts <= {0, -1} or (len(xs) > 0 and len(ys) > 0 and xs != ys):
                raise InvariantViolation(f"term shifts the excitation charge by {sorted(shifts)}")
            Xb = np.abs(X) > 0
            Yb = np.abs(Y) > 0
            for c in np.unique(label[inside]):
                src = inside & (label == c)
                rows = Xb[:, src].any(axis=1)
                cols = Yb[src, :].any(axis=0)
                if not rows.any() or not cols.any():
                    continue
                li, lj = label[rows], label[cols]
                if (li < 0).any() or (lj < 0).any() or (li[:, None] != lj[None, :]).any():
                    raise InvariantViolation("term couples kept coherences to discarded ones")

    def _build(self, terms):
        L = self.layout
        slots = L.slots
        S = L.n_slots
        kept = L.kept
        Ms = L.n_sectors
        A = np.zeros((Ms, Ms, S * S, S * S), complex)
        J = np.zeros((Ms - 1, Ms - 1, S * S, S * S), complex)
        for X, Y in terms:
            X = np.pad(np.asarray(X, complex), ((0, 1), (0, 1)))
            Y = np.pad(np.asarray(Y, complex), ((0, 1), (0, 1)))
            Xd = X[slots[:, :, None], slots[:, None, :]]
            Yd = Y[slots[:, :, None], slots[:, None, :]]
            A += np.einsum("mik,nlj->mnijkl", Xd, Yd).reshape(Ms, Ms, S * S, S * S)
            Xdn = X[slots[:-1, :, None], slots[1:, None, :]]
            Yup = Y[slots[1:, :, None], slots[:-1, None, :]]
            J += np.einsum("mik,nlj->mnijkl", Xdn, Yup).reshape(Ms - 1, Ms - 1, S * S, S * S)
        A = A[:, :, kept][:, :, :, kept]
        J = J[:, :, kept][:, :, :, kept]
        if self.diagonal_only:
            A = np.ascontiguousarray(np.einsum("mmij->mij", A))
            J = np.ascontiguousarray(np.einsum("mmij->mij", J))
        return A, J

    def _propagators(self, h: float) -> np.ndarray:
        """Stacked ``P[k]``: contribution of block ``(M + k, M' + k)`` after time ``h``."""
        D, B = self.depth, self.layout.block_size
        A, J = self.A, self.J
        Ms = self.layout.n_sectors
        lead = (Ms,) if self.diagonal_only else (Ms, Ms)
        Z = np.zeros(lead + (D * B, D * B), complex)
        for k in range(D):
            s = slice(k * B, (k + 1) * B)
            if self.diagonal_only:
                Z[: Ms - k, s, s] = A[k:]
                if k + 1 < D:
                    Z[: Ms - k - 1, s, (k + 1) * B:(k + 2) * B] = J[k:]
            else:
                Z[: Ms - k, : Ms - k, s, s] = A[k:, k:]
                if k + 1 < D:
                    Z[: Ms - k - 1, : Ms - k - 1, s, (k + 1) * B:(k + 2) * B] = J[k:, k:]
        E = sla.expm(Z * h)
        return np.stack([E[..., :B, k * B:(k + 1) * B] for k in range(D)])

    def propagator(self, h: float) -> np.ndarray:
        if abs(h - self.step) < 1e-15:
            return self.P
        key = round(h, 12)
        if key not in self._props:
            self._props[key] = self._propagators(h)
        return self._props[key]

    # -- time stepping ------------------------------------------------
    def apply(self, x: np.ndarray, P: np.ndarray | None = None) -> np.ndarray:
        """One step ``x -> sum_k P[k] x[shifted by k]``."""
        P = self.P if P is None else P
        if self.diagonal_only:
            out = np.einsum("mij,mj->mi", P[0], x)
            for k in range(1, self.depth):
                out[:-k] += np.einsum("mij,mj->mi", P[k][:-k], x[k:])
            return out
        out = np.einsum("mnij,mnj->mni", P[0], x)
        for k in range(1, self.depth):
            out[:-k, :-k] += np.einsum("mnij,mnj->mni", P[k][:-k, :-k], x[k:, k:])
        return out

    def evolve(self, x: np.ndarray, duration: float) -> np.ndarray:
        """Propagate for ``duration``; a final partial step is taken if needed."""
        if duration < 0:
            raise ValueError("duration must be non-negative")
        n = int(np.floor(duration / self.step + 1e-9))
        for _ in range(n):
            x = self.apply(x)
        rem = duration - n * self.step
        if rem > 1e-12:
            x = self.apply(x, self.propagator(rem))
        return x

    def evolve_sampled(self, x: np.ndarray, times):
        """Yield ``(t, x(t))`` for ascending sample times."""
        t = 0.0
        for ts in times:
            if ts < t - 1e-12:
                raise ValueError("sample times must be ascending")
            x = self.evolve(x, max(ts - t, 0.0))
            t = ts
            yield ts, x
