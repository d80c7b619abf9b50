"""The detection sequence: prepare, interact, trace out the source, displace."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError
from .hilbert import (
    DensityMatrix,
    HilbertSpace,
    coherent_amplitudes,
    detector_space,
    displacement_operator,
    partial_trace,
    _check_amplitude,
)
from .lindblad import IntegratorConfig, build_model, evolve
from .metrics import p_error_optimal, p_error_projective
from .params import SystemParams
from .sectors import SectorLayout, SectorPropagator

__all__ = [
    "SequenceResult",
    "InteractionSimulator",
    "initial_state",
    "run_interaction",
    "apply_unconditional_displacement",
]


def _validated(space: HilbertSpace, m: np.ndarray, tol: float = 1e-6) -> DensityMatrix:
    m = 0.5 * (m + m.conj().T)
    return DensityMatrix(space, m, check=False).validate(herm_tol=tol, trace_tol=tol, eig_tol=tol)


@dataclass(frozen=True)
class SequenceResult:
    """Branch states after the interaction window (source traced out).

    Index 0 is the no-photon branch and index 1 the photon branch.
    """

    rho_joint_0: DensityMatrix
    rho_joint_1: DensityMatrix
    rho_res_0: DensityMatrix
    rho_res_1: DensityMatrix
    T_interact_used: float
    alpha: complex
    source_residual: tuple = (0.0, 0.0)
    displaced_by: complex = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for r in (self.rho_joint_0, self.rho_joint_1, self.rho_res_0, self.rho_res_1):
            r.validate(herm_tol=1e-6, trace_tol=1e-6, eig_tol=1e-6)

    def p_error_projective(self) -> float:
        """Projective error against the coherent reference in the current frame."""
        return p_error_projective(self.rho_res_0, self.rho_res_1, self.alpha - self.displaced_by)

    def p_error_optimal(self) -> float:
        return p_error_optimal(self.rho_res_0, self.rho_res_1)


def initial_state(p: SystemParams, space: HilbertSpace, photon: bool) -> DensityMatrix:
    """|photon>_source x |0>_atom x |alpha>_resonator."""
    _check_amplitude(p.alpha, space.subdim("resonator"))
    src = np.zeros(space.subdim("source"))
    src[1 if photon else 0] = 1.0
    atom = np.zeros(space.subdim("atom"))
    atom[0] = 1.0
    v = np.kron(np.kron(src, atom), coherent_amplitudes(p.alpha, space.subdim("resonator")))
    return DensityMatrix(space, np.outer(v, v.conj()))


class InteractionSimulator:
    """Propagates both photon branches through the interaction window.

    Parameters
    ----------
    p : SystemParams
    kind : {"full", "dispersive"}
    n_cut : int
        Fock cutoff of the resonator.
    method : {"sector", "dense"}
        ``"sector"`` uses the block propagator with step ``step``; ``"dense"``
        integrates the full master equation with ``integrator``.
    """

    def __init__(
        self,
        p: SystemParams,
        kind: str = "full",
        n_cut: int = 30,
        method: str = "sector",
        step: float = 0.25,
        depth: int = 3,
        integrator: IntegratorConfig | None = None,
    ):
        if method not in ("sector", "dense"):
            raise ConfigError(f"unknown interaction method {method!r}")
        self.p = p
        self.kind = kind
        self.method = method
        self.space = detector_space(n_cut, with_source=True)
        self.model = build_model(p, self.space, kind=kind)
        self.integrator = integrator or IntegratorConfig()
        if method == "sector":
            self.layout = SectorLayout.from_space(self.space)
            self.prop = SectorPropagator(self.model.superoperator_terms(), self.layout, step, depth=depth)
        self._x0 = {}

    def _blocks(self, photon: bool) -> np.ndarray:
        if photon not in self._x0:
            self._x0[photon] = self.layout.from_dense(initial_state(self.p, self.space, photon))
        return self._x0[photon]

    def resonator_states(self, times):
        """Yield ``(T, rho_res_0, rho_res_1)`` as raw matrices for ascending ``times``."""
        if self.method == "dense":
            for T in times:
                r = self.run(T)
                yield T, r.rho_res_0.matrix, r.rho_res_1.matrix
            return
        gens = [self.prop.evolve_sampled(self._blocks(b), times) for b in (False, True)]
        for (T, x0), (_, x1) in zip(*gens):
            yield T, self.layout.reduced(x0, "resonator"), self.layout.reduced(x1, "resonator")

    def run(self, T: float | None = None) -> SequenceResult:
        T = self.p.T_interact if T is None else float(T)
        if T <= 0:
            raise ConfigError("interaction time must be positive")
        joint, res, resid = [], [], []
        keep = ("atom", "resonator")
        sub = self.space.subspace(keep)
        for photon in (False, True):
            if self.method == "sector":
                x = self.prop.evolve(self._blocks(photon), T)
                j = self.layout.reduced(x, keep)
                s = self.layout.reduced(x, "source")
            else:
                cfg = replace(self.integrator, sample_times=(T,))
                rho = evolve(self.model, initial_state(self.p, self.space, photon), cfg)[-1][1].matrix
                j = partial_trace(rho, keep, self.space)
                s = partial_trace(rho, "source", self.space)
            joint.append(_validated(sub, j))
            res.append(_validated(self.space.subspace(["resonator"]), partial_trace(j, "resonator", sub)))
            resid.append(float(s[1, 1].real))
        return SequenceResult(
            joint[0], joint[1], res[0], res[1], T, self.p.alpha, tuple(resid),
            meta={"kind": self.kind, "method": self.method, "n_cut": self.space.n_cut},
        )


def run_interaction(p: SystemParams, hamiltonian_kind: str = "full", n_cut: int = 30, **kwargs) -> SequenceResult:
    """Evolve both photon branches for ``p.T_interact`` and trace out the source."""
    return InteractionSimulator(p, hamiltonian_kind, n_cut, **kwargs).run()


def apply_unconditional_displacement(s: SequenceResult, alpha: complex) -> SequenceResult:
    """Apply D(-alpha) to the resonator of both branches."""
    sub = s.rho_joint_0.space
    D = displacement_operator(-alpha, sub).matrix

    def tr(r, U):
        return DensityMatrix(r.space, U @ r.matrix @ U.conj().T, check=False)

    j0, j1 = tr(s.rho_joint_0, D), tr(s.rho_joint_1, D)
    r0 = partial_trace(j0, "resonator")
    r1 = partial_trace(j1, "resonator")
    return replace(s, rho_joint_0=j0, rho_joint_1=j1, rho_res_0=r0, rho_res_1=r1, displaced_by=s.displaced_by + alpha)
