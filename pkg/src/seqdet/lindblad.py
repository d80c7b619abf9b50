"""Hamiltonians, Lindblad models and the dense master-equation integrator."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, sqrt

import numpy as np
from scipy.integrate import solve_ivp

from .errors import DegenerateDetuningError, DimensionMismatchError, InvariantViolation, StepSizeUnderflow
from .hilbert import DensityMatrix, HilbertSpace, Operator, destroy, embed, sigma
from .params import SystemParams

__all__ = [
    "CascadedPair",
    "LindbladModel",
    "IntegratorConfig",
    "atom_op",
    "resonator_destroy",
    "source_destroy",
    "build_full_hamiltonian",
    "build_dispersive_hamiltonian",
    "build_model",
    "liouvillian_apply",
    "evolve",
]


def atom_op(mu: int, nu: int, space: HilbertSpace) -> Operator:
    return embed(sigma(mu, nu, space.subdim("atom")), "atom", space)


def resonator_destroy(space: HilbertSpace) -> Operator:
    return embed(destroy(space.subdim("resonator")), "resonator", space)


def source_destroy(space: HilbertSpace) -> Operator:
    return embed(destroy(space.subdim("source")), "source", space)


def build_full_hamiltonian(p: SystemParams, space: HilbertSpace, include_probe: bool = False) -> Operator:
    """Rotating-frame three-level atom coupled to the resonator on its 1-2 transition.

    With ``include_probe`` the 0-1 drive Omega*(s01 + s10) is added and the
    probe-stage detuning replaces ``delta1``.
    """
    d1 = p.probe.delta1_probe if include_probe else p.delta1
    s11, s22 = atom_op(1, 1, space), atom_op(2, 2, space)
    a = resonator_destroy(space)
    H = d1 * s11 + (d1 + p.delta2) * s22 - 1j * p.g * (a @ atom_op(2, 1, space) - a.dag() @ atom_op(1, 2, space))
    if include_probe:
        H = H + p.probe.Omega * (atom_op(0, 1, space) + atom_op(1, 0, space))
    return H


def build_dispersive_hamiltonian(p: SystemParams, space: HilbertSpace, include_probe: bool = False) -> Operator:
    """delta1 s11 - chi s11 a^dag a with chi = g^2 / (delta1 + delta2)."""
    if p.delta1 + p.delta2 == 0:
        raise DegenerateDetuningError("dispersive shift undefined for delta1 + delta2 = 0")
    d1 = p.probe.delta1_probe if include_probe else p.delta1
    chi = p.g ** 2 / (p.delta1 + p.delta2)
    s11 = atom_op(1, 1, space)
    a = resonator_destroy(space)
    H = d1 * s11 - chi * (s11 @ a.dag() @ a)
    if include_probe:
        H = H + p.probe.Omega * (atom_op(0, 1, space) + atom_op(1, 0, space))
    return H


@dataclass(frozen=True)
class CascadedPair:
    """Unidirectional coupling of a source mode's output into a target transition."""

    source_op: Operator
    source_rate: float
    target_op: Operator
    target_rate: float

    @property
    def strength(self) -> float:
        return sqrt(self.source_rate * self.target_rate)


@dataclass(frozen=True)
class LindbladModel:
    """H plus rate-weighted dissipators, optionally with a cascaded source."""

    hamiltonian: Operator
    collapse_terms: tuple = ()
    cascaded_pair: CascadedPair | None = None

    def __post_init__(self):
        object.__setattr__(self, "collapse_terms", tuple((float(r), op) for r, op in self.collapse_terms))
        sp = self.hamiltonian.space
        for rate, op in self.collapse_terms:
            if rate < 0:
                raise ValueError(f"negative collapse rate {rate}")
            if op.space != sp:
                raise DimensionMismatchError("collapse operator on a different space")
        if self.cascaded_pair is not None:
            cp = self.cascaded_pair
            if cp.source_rate < 0 or cp.target_rate < 0:
                raise ValueError("negative cascaded rate")
            if cp.source_op.space != sp or cp.target_op.space != sp:
                raise DimensionMismatchError("cascaded operators on a different space")

    @property
    def space(self) -> HilbertSpace:
        return self.hamiltonian.space

    def without_channel(self, op: Operator) -> "LindbladModel":
        """Copy with every dissipator built on ``op`` removed."""
        kept = tuple((r, c) for r, c in self.collapse_terms if not np.array_equal(c.matrix, op.matrix))
        return LindbladModel(self.hamiltonian, kept, self.cascaded_pair)

    def effective_hamiltonian(self) -> np.ndarray:
        """Non-Hermitian generator of all left-multiplied terms.

        The right-multiplied terms are the conjugate transpose, so the
        Liouvillian is ``-i(Heff rho - rho Heff^dag) + sum X rho Y``.
        """
        heff = self.hamiltonian.matrix.astype(complex)
        for rate, op in self.collapse_terms:
            if rate:
                L = op.matrix
                heff = heff - 0.5j * rate * (L.conj().T @ L)
        cp = self.cascaded_pair
        if cp is not None and cp.strength:
            heff = heff - 1j * cp.strength * (cp.target_op.matrix.conj().T @ cp.source_op.matrix)
        return heff

    def sandwich_terms(self) -> list:
        """Pairs (X, Y) for the terms X rho Y that are not part of Heff."""
        terms = []
        for rate, op in self.collapse_terms:
            if rate:
                terms.append((rate * op.matrix, op.matrix.conj().T))
        cp = self.cascaded_pair
        if cp is not None and cp.strength:
            c, s = cp.source_op.matrix, cp.target_op.matrix
            terms.append((cp.strength * c, s.conj().T))
            terms.append((cp.strength * s, c.conj().T))
        return terms

    def superoperator_terms(self) -> list:
        """All (X, Y) with L(rho) = sum X rho Y."""
        heff = self.effective_hamiltonian()
        eye = np.eye(self.space.dim, dtype=complex)
        return [(-1j * heff, eye), (eye, 1j * heff.conj().T)] + self.sandwich_terms()


def build_model(
    p: SystemParams,
    space: HilbertSpace,
    kind: str = "full",
    include_probe: bool = False,
) -> LindbladModel:
    """Master equation for one detector stage.

    The source mode and its cascaded coupling are included whenever ``space``
    has a ``"source"`` factor.
    """
    if kind == "full":
        H = build_full_hamiltonian(p, space, include_probe)
    elif kind == "dispersive":
        H = build_dispersive_hamiltonian(p, space, include_probe)
    else:
        raise ValueError(f"unknown hamiltonian kind {kind!r}")
    s01 = atom_op(0, 1, space)
    terms = [
        (p.gamma01, s01),
        (p.gamma12, atom_op(1, 2, space)),
        (p.kappa, resonator_destroy(space)),
        (p.gamma11, atom_op(1, 1, space)),
        (p.gamma22, atom_op(2, 2, space)),
    ]
    cascade = None
    if "source" in space.labels:
        c = source_destroy(space)
        terms.insert(0, (p.gamma_c, c))
        cascade = CascadedPair(c, p.gamma_c, s01, p.gamma01)
    return LindbladModel(H, tuple(terms), cascade)


def liouvillian_apply(m: LindbladModel, rho) -> np.ndarray:
    """d rho / dt for the model, written term by term."""
    r = rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)
    if r.shape != (m.space.dim, m.space.dim):
        raise DimensionMismatchError(f"state shape {r.shape} does not match model dimension {m.space.dim}")
    H = m.hamiltonian.matrix
    out = -1j * (H @ r - r @ H)
    for rate, op in m.collapse_terms:
        if rate:
            L = op.matrix
            Ld = L.conj().T
            LdL = Ld @ L
            out = out + rate * (L @ r @ Ld - 0.5 * (LdL @ r + r @ LdL))
    cp = m.cascaded_pair
    if cp is not None and cp.strength:
        c, s = cp.source_op.matrix, cp.target_op.matrix
        cd, sd = c.conj().T, s.conj().T
        # [c rho, s^dag] + [s, rho c^dag]
        out = out + cp.strength * (c @ r @ sd - sd @ c @ r + s @ r @ cd - r @ cd @ s)
    return out


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step RK4 (``dt``) or adaptive embedded RK (``tolerance``)."""

    method: str = "rk4"
    dt: float = 5e-4
    tolerance: float = 1e-9
    sample_times: tuple = field(default=())

    def __post_init__(self):
        object.__setattr__(self, "sample_times", tuple(float(t) for t in self.sample_times))
        if self.method == "rk4":
            if not self.dt > 0:
                raise ValueError("dt must be positive")
        elif self.method == "adaptive":
            if not 0 < self.tolerance <= 1e-3:
                raise ValueError("tolerance must lie in (0, 1e-3]")
        else:
            raise ValueError(f"unknown integrator method {self.method!r}")
        if any(t < 0 for t in self.sample_times):
            raise ValueError("sample times must be non-negative")


class _HermitianRHS:
    """Fast right-hand side valid for Hermitian arguments."""

    def __init__(self, m: LindbladModel):
        self.heff = -1j * m.effective_hamiltonian()
        self.terms = m.sandwich_terms()
        # the two cascaded cross terms are each other's adjoint; keep one and symmetrize
        self._cascade = m.cascaded_pair is not None and m.cascaded_pair.strength > 0
        if self._cascade:
            self.terms = self.terms[:-1]

    def __call__(self, r: np.ndarray) -> np.ndarray:
        g = self.heff @ r
        for i, (X, Y) in enumerate(self.terms):
            t = X @ r @ Y
            if self._cascade and i == len(self.terms) - 1:
                g = g + t
            else:
                g = g + 0.5 * t
        return g + g.conj().T


def _check_trace(t: float, r: np.ndarray, tol: float = 1e-4):
    tr = np.trace(r).real
    if not np.isfinite(tr) or abs(tr - 1.0) > tol:
        raise InvariantViolation(f"trace drifted to {tr!r} at t = {t:g}")


def evolve(m: LindbladModel, rho0: DensityMatrix, cfg: IntegratorConfig) -> list:
    """Integrate the master equation; returns ``[(t, DensityMatrix), ...]`` at the sample times.

    States are checked for trace drift beyond 1e-4 (raises
    :class:`InvariantViolation`).
    """
    if rho0.space != m.space:
        raise DimensionMismatchError("initial state and model live on different spaces")
    times = sorted(cfg.sample_times) if cfg.sample_times else [0.0]
    r = np.array(rho0.matrix, dtype=complex)
    herm = np.allclose(r, r.conj().T, atol=1e-12, rtol=0)
    out = []
    if cfg.method == "rk4":
        f = _HermitianRHS(m) if herm else (lambda x: liouvillian_apply(m, x))
        t = 0.0
        for ts in times:
            span = ts - t
            n = int(ceil(span / cfg.dt - 1e-9)) if span > 0 else 0
            h = span / n if n else 0.0
            for _ in range(n):
                k1 = f(r)
                k2 = f(r + 0.5 * h * k1)
                k3 = f(r + 0.5 * h * k2)
                k4 = f(r + h * k3)
                r = r + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            t = ts
            _check_trace(t, r)
            out.append((ts, DensityMatrix(m.space, r, check=False)))
        return out

    dim = m.space.dim
    f = _HermitianRHS(m) if herm else (lambda x: liouvillian_apply(m, x))
    sol = solve_ivp(
        lambda _t, y: f(y.reshape(dim, dim)).ravel(),
        (0.0, times[-1]),
        r.ravel(),
        method="DOP853",
        rtol=cfg.tolerance,
        atol=cfg.tolerance * 1e-2,
        t_eval=times,
    )
    if not sol.success:
        raise StepSizeUnderflow(f"adaptive integration failed: {sol.message}")
    for k, ts in enumerate(times):
        rk = sol.y[:, k].reshape(dim, dim)
        _check_trace(ts, rk)
        out.append((ts, DensityMatrix(m.space, rk, check=False)))
    return out
