"""Homodyne probe stage: stochastic trajectories, matched filter and thresholding.

The probe-stage state lives on atom x resonator.  Both the probe Hamiltonian
and every dissipator preserve the block structure used by
:mod:`seqdet.sectors`, and the measured operator acts inside a block, so only
the ``M = M'`` blocks are ever needed.  Each is a small Hermitian matrix and
is stored as a real parameter vector.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from math import sqrt

import numpy as np

from . import kernels
from .errors import ConfigError, DimensionMismatchError, InvariantViolation, PositivityBreakdown
from .hilbert import DensityMatrix, detector_space
from .lindblad import atom_op, build_model
from .params import SystemParams
from .sectors import SectorLayout, SectorPropagator

__all__ = [
    "TrajectoryRecord",
    "EnsembleResult",
    "ProbeStage",
    "trajectory_seed",
    "trajectory_noise",
    "reference_currents",
    "run_trajectory",
    "matched_filter_and_integrate",
    "classify_ensemble",
    "run_ensemble",
    "write_ensemble_csv",
    "write_histogram_csv",
    "write_summary",
]

SCHEMES = {"kraus": 0, "euler": 1}
POSITIVITY_FLOOR = -1e-3


def trajectory_seed(base_seed: int, branch: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(base_seed), int(branch), int(index)])


def trajectory_noise(base_seed: int, branch: int, index: int, n_steps: int, dt: float) -> np.ndarray:
    """Wiener increments of one trajectory from its own counter-based stream."""
    rng = np.random.Generator(np.random.Philox(trajectory_seed(base_seed, branch, index)))
    return rng.standard_normal(n_steps) * sqrt(dt)


def _seed_value(base_seed: int, branch: int, index: int) -> int:
    return int(trajectory_seed(base_seed, branch, index).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class TrajectoryRecord:
    branch: int
    seed: int
    S: float
    index: int = 0
    current_samples: np.ndarray | None = None

    def __post_init__(self):
        if not np.isfinite(self.S):
            raise InvariantViolation(f"filtered integral is not finite for trajectory {self.index}")


def _real(a: np.ndarray, what: str) -> np.ndarray:
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a.imag).max() > 1e-9 * scale:
        raise InvariantViolation(f"{what} is not real in the Hermitian parameterization")
    return np.ascontiguousarray(a.real)


class ProbeStage:
    """Precomputed real-valued operators for the probe stage.

    Parameters
    ----------
    p : SystemParams
        Probe settings are read from ``p.probe``.
    n_cut : int
        Resonator cutoff.
    scheme : {"kraus", "euler"}
        ``"kraus"`` applies the measurement as a completely positive map
        ``M rho M^dag`` with ``M = 1 + O dy - O^dag O dt / 2`` and then the exact
        propagator of the remaining generator.  ``"euler"`` adds the
        Euler-Maruyama innovation term to the exact propagator of the full
        generator.
    backend : str, optional
        Kernel backend name (see :mod:`seqdet.kernels`).
    prune_tol : float
        Sectors above the highest one carrying more than this weight are
        dropped for a trajectory batch.  Excitations are only ever lost, so
        the dropped weight stays below the tolerance up to measurement
        reweighting.
    """

    def __init__(self, p: SystemParams, n_cut: int = 30, scheme: str = "kraus", backend: str | None = None, prune_tol: float = 1e-12):
        if scheme not in SCHEMES:
            raise ConfigError(f"unknown SME scheme {scheme!r}")
        self.p = p
        self.scheme = scheme
        self.prune_tol = float(prune_tol)
        pp = p.probe
        self.dt = pp.dt
        self.n_steps = pp.n_steps
        self.space = detector_space(n_cut, with_source=False)
        self.layout = L = SectorLayout.from_space(self.space)
        self.backend, self._run = kernels.get_backend(backend, block_size=len(L.kept))
        model = build_model(p, self.space, include_probe=True)
        s01 = atom_op(0, 1, self.space)
        self.O = np.exp(-1j * pp.phi) * sqrt(p.gamma01) * s01.matrix

        self.T = L.real_basis()
        self.Tinv = np.linalg.inv(self.T)
        self.E, self.F = self._real_props(model.superoperator_terms())
        if scheme == "kraus":
            self.Em, self.Fm = self._real_props(model.without_channel(s01).superoperator_terms())
        else:
            self.Em, self.Fm = self.E, self.F

        Os = self._slot_operator(self.O)
        S = L.n_slots
        eye = np.eye(S)
        A0 = eye - 0.5 * self.dt * (Os.conj().T @ Os)
        kept = L.kept
        sub = lambda M: M[np.ix_(kept, kept)]
        if scheme == "kraus":
            K0 = np.kron(A0, A0.conj())
            K1 = np.kron(Os, A0.conj()) + np.kron(A0, Os.conj())
            K2 = np.kron(Os, Os.conj())
        else:
            K0 = np.kron(eye, eye)
            K1 = np.kron(Os, eye) + np.kron(eye, Os.conj())
            K2 = np.zeros_like(K0)
        self.K0, self.K1, self.K2 = (_real(self.Tinv @ sub(K) @ self.T, "measurement map") for K in (K0, K1, K2))
        # tr((O + O^dag) x) and tr(x) as real functionals; vec index i*S+j holds x[i, j]
        cO = np.array([Os[j, i] for i, j in (divmod(int(b), S) for b in kept)])
        cT = np.array([1.0 if i == j else 0.0 for i, j in (divmod(int(b), S) for b in kept)])
        self.c = np.ascontiguousarray((2.0 * (cO @ self.T)).real)
        self.tv = np.ascontiguousarray((cT @ self.T).real)
        self.n_diag = int(cT.sum())

    def _real_props(self, terms):
        P = SectorPropagator(terms, self.layout, self.dt, depth=2, diagonal_only=True).P
        E = _real(self.Tinv @ P[0] @ self.T, "propagator")
        F = _real(self.Tinv @ P[1] @ self.T, "propagator")
        return np.ascontiguousarray(E), np.ascontiguousarray(F)

    def _slot_operator(self, op: np.ndarray) -> np.ndarray:
        """Restriction of a sector-preserving operator to slot space (same in every sector)."""
        slots = self.layout.slots
        dim = self.space.dim
        pad = np.pad(op, ((0, 1), (0, 1)))
        blocks = pad[slots[:, :, None], slots[:, None, :]]
        full = [m for m in range(len(slots)) if (slots[m] < dim).all()]
        ref = blocks[full[0]]
        valid = slots < dim
        for m in range(len(slots)):
            mask = valid[m][:, None] & valid[m][None, :]
            if not np.allclose(blocks[m][mask], ref[mask], atol=1e-14):
                raise InvariantViolation("measured operator differs between sectors")
        return ref

    # -- state conversion ------------------------------------------------
    def real_blocks(self, rho) -> np.ndarray:
        """Real sector parameters of an atom x resonator state."""
        if isinstance(rho, DensityMatrix) and rho.space != self.space:
            raise DimensionMismatchError("probe stage expects an atom x resonator state")
        x = self.layout.diagonal_blocks(rho)
        return _real(x @ self.Tinv.T, "state")

    def block_matrix(self, r: np.ndarray) -> np.ndarray:
        """Dense matrix holding the sector-diagonal part encoded by ``r``."""
        Ms, B = self.layout.n_sectors, self.layout.block_size
        x = np.zeros((Ms, Ms, B), complex)
        x[np.arange(Ms), np.arange(Ms)] = r[:Ms] @ self.T.T
        return self.layout.to_dense(x)

    def active_sectors(self, r0: np.ndarray) -> int:
        w = np.abs(r0 @ self.tv)
        tail = np.cumsum(w[::-1])[::-1]
        above = np.flatnonzero(tail >= self.prune_tol)
        return int(above[-1]) + 1 if len(above) else 1

    # -- dynamics --------------------------------------------------------
    def deterministic(self, r0: np.ndarray, n_steps: int | None = None):
        """Master-equation evolution; returns (``<O + O^dag>`` at each step start, final r)."""
        n_steps = self.n_steps if n_steps is None else int(n_steps)
        noise = np.zeros((1, n_steps))
        _, final, _, rec = self._run(
            self.K0, self.K1, self.K2, self.E, self.F, self.c, self.tv,
            np.ascontiguousarray(r0), np.zeros(n_steps), noise, self.dt, 1, 1, True, 0,
        )
        # rec holds dy/dt = e at the start of each step
        return rec[0], final[0]

    def run_batch(self, r0, h, branch: int, indices, base_seed: int, record_every: int = 0, keep_final: bool = False, noise=None):
        """Run trajectories ``indices`` of ``branch``; returns ``(S, final, min_diag, rec)``.

        ``noise`` (len(indices), n_steps) replaces the seeded Wiener increments.
        """
        indices = list(indices)
        h = np.ascontiguousarray(h, dtype=float)
        if h.shape != (self.n_steps,):
            raise DimensionMismatchError(f"filter has {h.shape[0]} samples, expected {self.n_steps}")
        Ma = self.active_sectors(r0)
        if noise is None:
            noise = np.stack([trajectory_noise(base_seed, branch, i, self.n_steps, self.dt) for i in indices])
        else:
            noise = np.ascontiguousarray(noise, dtype=float)
            if noise.shape != (len(indices), self.n_steps):
                raise DimensionMismatchError(f"noise shape {noise.shape} != {(len(indices), self.n_steps)}")
        S, final, mind, rec = self._run(
            self.K0, self.K1, self.K2,
            np.ascontiguousarray(self.Em[:Ma]), np.ascontiguousarray(self.Fm[:Ma]),
            self.c, self.tv, np.ascontiguousarray(r0[:Ma]), h, noise, self.dt,
            SCHEMES[self.scheme], int(record_every), bool(keep_final), self.n_diag,
        )
        if self.scheme == "euler" and (mind < POSITIVITY_FLOOR).any():
            bad = int(np.argmin(mind))
            raise PositivityBreakdown(
                f"trajectory {indices[bad]} of branch {branch} reached a diagonal entry {mind[bad]:.3g}; reduce dt"
            )
        if keep_final:
            full = np.zeros((len(indices),) + r0.shape)
            full[:, :Ma] = final
            final = full
        return S, final, mind, rec


def reference_currents(p: SystemParams, rho_init_0, rho_init_1, stage: ProbeStage | None = None, n_cut: int = 30):
    """Mean homodyne currents of the two branches from the deterministic master equation."""
    stage = stage or ProbeStage(p, n_cut)
    i0, _ = stage.deterministic(stage.real_blocks(rho_init_0))
    i1, _ = stage.deterministic(stage.real_blocks(rho_init_1))
    return i0, i1


def matched_filter_and_integrate(current, ref0, ref1, dt: float) -> float:
    """``S = sum_k I_k h_k dt`` with ``h = |ref0 - ref1|``."""
    current, ref0, ref1 = (np.asarray(a, dtype=float) for a in (current, ref0, ref1))
    if not (current.shape == ref0.shape == ref1.shape):
        raise DimensionMismatchError("current and reference series are on different grids")
    return float(np.sum(current * np.abs(ref0 - ref1)) * dt)


def run_trajectory(
    p: SystemParams,
    rho_init,
    branch: int,
    seed: int,
    *,
    filter_h=None,
    stage: ProbeStage | None = None,
    n_cut: int = 30,
    record_every: int = 1,
) -> TrajectoryRecord:
    """One trajectory; ``seed`` is the trajectory index within the branch stream.

    Without ``filter_h`` the unweighted integral of the current is returned.
    """
    stage = stage or ProbeStage(p, n_cut)
    h = np.ones(stage.n_steps) if filter_h is None else filter_h
    S, _, _, rec = stage.run_batch(stage.real_blocks(rho_init), h, branch, [seed], p.probe.base_seed, record_every)
    return TrajectoryRecord(
        branch, _seed_value(p.probe.base_seed, branch, seed), float(S[0]), seed,
        None if rec is None else rec[0],
    )


@dataclass
class EnsembleResult:
    """Filtered integrals of both branches and the error-minimizing threshold."""

    S0: np.ndarray
    S1: np.ndarray
    threshold: float
    p_error_real: float
    flipped: bool
    bin_edges: np.ndarray
    counts0: np.ndarray
    counts1: np.ndarray
    err0: float = 0.0
    err1: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.p_error_real <= 1.0:
            raise InvariantViolation("error probability outside [0, 1]")

    @property
    def standard_error(self) -> float:
        n0, n1 = len(self.S0), len(self.S1)
        return 0.5 * sqrt(self.err0 * (1 - self.err0) / n0 + self.err1 * (1 - self.err1) / n1)


def classify_ensemble(S0, S1, bins: int = 60) -> EnsembleResult:
    """Scan thresholds at midpoints of the pooled sorted values.

    Branch 0 is expected below branch 1; if its mean is larger the comparison
    is reversed and ``flipped`` is set.
    """
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    if S0.size == 0 or S1.size == 0:
        raise ValueError("both branches need at least one value")
    flipped = bool(S0.mean() > S1.mean())
    a, b = (-S0, -S1) if flipped else (S0, S1)
    u = np.unique(np.concatenate([a, b]))
    # midpoints plus one threshold beyond each end (everything assigned to one branch)
    cand = np.concatenate([[u[0] - 1.0], 0.5 * (u[1:] + u[:-1]), [u[-1] + 1.0]])
    sa, sb = np.sort(a), np.sort(b)
    e0 = (sa.size - np.searchsorted(sa, cand, side="right")) / sa.size
    e1 = np.searchsorted(sb, cand, side="left") / sb.size
    p = 0.5 * e0 + 0.5 * e1
    k = int(np.argmin(p))
    thr = float(-cand[k] if flipped else cand[k])
    lo = min(S0.min(), S1.min())
    hi = max(S0.max(), S1.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, bins + 1)
    c0, _ = np.histogram(S0, edges)
    c1, _ = np.histogram(S1, edges)
    return EnsembleResult(S0, S1, thr, float(p[k]), flipped, edges, c0, c1, float(e0[k]), float(e1[k]))


def _worker_count(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get("SEQDET_WORKERS", "1") or 1)
    if workers < 1:
        raise ConfigError("worker count must be at least 1")
    return workers


def _chunk_task(args):
    stage, r0, h, branch, idx, base_seed, keep_final = args
    S, final, _, _ = stage.run_batch(r0, h, branch, idx, base_seed, keep_final=keep_final)
    return S, final


def run_ensemble(
    p: SystemParams,
    rho_init_0,
    rho_init_1,
    n_traj: int | None = None,
    *,
    n_cut: int = 30,
    workers: int | None = None,
    scheme: str = "kraus",
    backend: str | None = None,
    chunk: int = 64,
    keep_final: bool = False,
    bins: int = 60,
    progress=None,
) -> EnsembleResult:
    """Run ``n_traj`` trajectories per branch and classify them.

    Trajectories are split into fixed chunks of ``chunk`` indices, so results
    are identical for any ``workers``.
    """
    pp = p.probe
    n_traj = pp.n_traj if n_traj is None else int(n_traj)
    if n_traj < 1:
        raise ConfigError("n_traj must be at least 1")
    workers = _worker_count(workers)
    stage = ProbeStage(p, n_cut, scheme=scheme, backend=backend)
    r0 = [stage.real_blocks(rho_init_0), stage.real_blocks(rho_init_1)]
    i0, _ = stage.deterministic(r0[0])
    i1, _ = stage.deterministic(r0[1])
    h = np.abs(i0 - i1)
    tasks = [
        (stage, r0[b], h, b, list(range(s, min(s + chunk, n_traj))), pp.base_seed, keep_final)
        for b in (0, 1)
        for s in range(0, n_traj, chunk)
    ]
    if workers == 1:
        results = []
        for t in tasks:
            results.append(_chunk_task(t))
            if progress:
                progress(len(results), len(tasks))
    else:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            results = list(ex.map(_chunk_task, tasks))
    half = len(tasks) // 2
    S = [np.concatenate([r[0] for r in results[:half]]), np.concatenate([r[0] for r in results[half:]])]
    res = classify_ensemble(S[0], S[1], bins=bins)
    res.meta.update(
        n_traj=n_traj, dt=pp.dt, base_seed=pp.base_seed, T_probe=pp.T_probe, scheme=scheme,
        backend=stage.backend, n_cut=n_cut, filter_energy=float(np.sum(h * h) * pp.dt),
        mean_current_0=i0, mean_current_1=i1,
    )
    if keep_final:
        res.meta["final_0"] = np.concatenate([r[1] for r in results[:half]])
        res.meta["final_1"] = np.concatenate([r[1] for r in results[half:]])
    return res


def _header(f, header: str):
    for line in header.splitlines():
        f.write(f"# {line}\n")


def write_ensemble_csv(res: EnsembleResult, path, header: str = "") -> None:
    base = res.meta.get("base_seed", 0)
    with open(path, "w") as f:
        _header(f, header)
        f.write("branch,seed,S\n")
        for b, arr in ((0, res.S0), (1, res.S1)):
            for i, s in enumerate(arr):
                f.write(f"{b},{_seed_value(base, b, i)},{s:.12g}\n")


def write_histogram_csv(res: EnsembleResult, path, header: str = "") -> None:
    with open(path, "w") as f:
        _header(f, header)
        f.write("bin_left,bin_right,count0,count1\n")
        for lo, hi, a, b in zip(res.bin_edges[:-1], res.bin_edges[1:], res.counts0, res.counts1):
            f.write(f"{lo:.12g},{hi:.12g},{a},{b}\n")


def write_summary(res: EnsembleResult, path, header: str = "") -> None:
    m = res.meta
    rows = [
        ("threshold", f"{res.threshold:.12g}"),
        ("p_error_real", f"{res.p_error_real:.12g}"),
        ("standard_error", f"{res.standard_error:.12g}"),
        ("orientation_flipped", str(res.flipped).lower()),
        ("n_traj", str(m.get("n_traj", len(res.S0)))),
        ("dt", f"{m.get('dt', float('nan')):.12g}"),
        ("base_seed", str(m.get("base_seed", ""))),
        ("scheme", str(m.get("scheme", ""))),
    ]
    with open(path, "w") as f:
        _header(f, header)
        for k, v in rows:
            f.write(f"{k} = {v}\n")
