"""Minimization of the projective error over detunings and interaction time."""
from __future__ import annotations

from dataclasses import dataclass, field
from math import floor

import numpy as np
from scipy.optimize import minimize

from .errors import BoundsError, ConfigError
from .metrics import p_error_optimal, p_error_projective
from .params import SystemParams
from .sequence import InteractionSimulator

__all__ = [
    "CONFIGURATIONS",
    "configure",
    "time_grid",
    "ErrorObjective",
    "OptimizationResult",
    "SweepPoint",
    "minimize_error",
    "sweep_gamma_c",
    "write_sweep_csv",
]

# name -> (hamiltonian kind, resonator decay on, dephasing on)
CONFIGURATIONS = {
    "full": ("full", True, True),
    "full_kappa0": ("full", False, True),
    "full_ideal": ("full", False, False),
    "dispersive_ideal": ("dispersive", False, False),
}


def configure(p: SystemParams, config: str) -> tuple[SystemParams, str]:
    """Switch decay channels off as the named configuration requires."""
    if config not in CONFIGURATIONS:
        raise ConfigError(f"unknown configuration {config!r}; choose from {sorted(CONFIGURATIONS)}")
    kind, kappa_on, deph_on = CONFIGURATIONS[config]
    changes = {}
    if not kappa_on:
        changes["kappa"] = 0.0
    if not deph_on:
        changes["gamma11"] = 0.0
    return (p.replace(**changes) if changes else p), kind


def time_grid(gamma_c: float, spacing: float = 1.0, min_points: int = 40) -> np.ndarray:
    """Uniform interaction times in (0, 10 / gamma_c]."""
    t_max = 10.0 / gamma_c
    spacing = min(spacing, t_max / min_points)
    n = int(floor(t_max / spacing + 1e-9))
    return spacing * np.arange(1, n + 1)


class ErrorObjective:
    """P_E,M minimized over a time grid, as a function of (delta1, delta2).

    One propagation per detuning pair covers the whole grid.  The no-photon
    branch never leaves the atomic ground state, so it does not depend on the
    detunings or coupling and is propagated only once.
    """

    def __init__(self, p: SystemParams, kind: str = "full", n_cut: int = 15, times=None, step: float | None = None, resolution: float = 1e-6):
        self.p = p
        self.kind = kind
        self.n_cut = n_cut
        self.times = time_grid(p.gamma_c) if times is None else np.asarray(times, dtype=float)
        if self.times.size == 0 or self.times[0] <= 0:
            raise ConfigError("time grid must contain positive times")
        self.step = float(self.times[0]) if step is None else float(step)
        self.resolution = resolution
        self.cache = {}
        self._rho0 = None
        self.n_evals = 0

    def _key(self, d1, d2):
        r = self.resolution
        return (round(d1 / r) * r, round(d2 / r) * r)

    def curve(self, delta1: float, delta2: float):
        """P_E,M and P_E,opt at every grid time."""
        q = self.p.replace(delta1=float(delta1), delta2=float(delta2))
        sim = InteractionSimulator(q, self.kind, self.n_cut, step=self.step)
        if self._rho0 is None:
            x0 = sim.prop.evolve_sampled(sim._blocks(False), self.times)
            self._rho0 = [sim.layout.reduced(x, "resonator") for _, x in x0]
        x1 = sim.prop.evolve_sampled(sim._blocks(True), self.times)
        pm, po = [], []
        for r0, (_, x) in zip(self._rho0, x1):
            r1 = sim.layout.reduced(x, "resonator")
            pm.append(p_error_projective(r0, r1, q.alpha))
            po.append(p_error_optimal(r0, r1))
        self.n_evals += 1
        return np.array(pm), np.array(po)

    def __call__(self, delta1: float, delta2: float) -> tuple[float, float]:
        """Best P_E,M over the grid and the time achieving it."""
        key = self._key(delta1, delta2)
        if key not in self.cache:
            pm, _ = self.curve(*key)
            k = int(np.argmin(pm))
            self.cache[key] = (float(pm[k]), float(self.times[k]))
        return self.cache[key]


@dataclass
class OptimizationResult:
    delta1: float
    delta2: float
    T_interact: float
    p_e_m: float
    p_e_opt: float
    n_evals: int
    restarts: list = field(default_factory=list)
    rugged: bool = False
    converged: bool = True


@dataclass(frozen=True)
class SweepPoint:
    gamma_c: float
    config: str
    best_delta1: float
    best_delta2: float
    best_T_interact: float
    p_e_m: float
    p_e_opt: float
    hamiltonian_kind: str
    kappa_on: bool
    dephasing_on: bool

    def __post_init__(self):
        if self.p_e_m < self.p_e_opt - 1e-9:
            raise ValueError("projective error below the optimal bound")
        if self.best_T_interact > 10.0 / self.gamma_c + 1e-9:
            raise ValueError("interaction time exceeds 10 / gamma_c")


def _check_bounds(bounds):
    (a1, b1), (a2, b2) = bounds
    if a1 > b1 or a2 > b2:
        raise BoundsError(f"empty search box {bounds}")
    lo, hi = a1 + a2, b1 + b2
    if lo <= 0.0 <= hi:
        raise BoundsError("search box contains delta1 + delta2 = 0")


def minimize_error(
    p: SystemParams,
    kind: str = "full",
    bounds=((-5.0, 0.0), (-150.0, -5.0)),
    *,
    n_restarts: int = 4,
    seed_grid=(5, 6),
    max_evals: int = 200,
    n_cut_search: int = 15,
    n_cut_final: int = 30,
    times=None,
) -> OptimizationResult:
    """Search (delta1, delta2, T_interact) for the smallest projective error.

    A coarse grid over the box seeds ``n_restarts`` bounded simplex searches
    from its best points; each detuning pair is scored by its best time on a
    uniform grid in (0, 10 / gamma_c].  The winner is re-evaluated at
    ``n_cut_final``.
    """
    _check_bounds(bounds)
    obj = ErrorObjective(p, kind, n_cut_search, times)
    (a1, b1), (a2, b2) = bounds
    g1 = np.linspace(a1, b1, seed_grid[0]) if b1 > a1 else np.array([a1])
    g2 = np.linspace(a2, b2, seed_grid[1]) if b2 > a2 else np.array([a2])
    seeds = sorted(((obj(d1, d2)[0], d1, d2) for d1 in g1 for d2 in g2))
    restarts = []
    degenerate = a1 == b1 and a2 == b2
    converged = True
    if not degenerate:
        span = np.array([max(b1 - a1, 1e-9), max(b2 - a2, 1e-9)])
        for _, d1, d2 in seeds[:n_restarts]:
            x0 = np.array([d1, d2])
            simplex = np.array([x0, x0 + [0.1 * span[0], 0], x0 + [0, 0.1 * span[1]]])
            simplex = np.clip(simplex, [a1, a2], [b1, b2])
            # keep the simplex non-degenerate when the seed sits on an upper bound
            for k in (1, 2):
                if np.allclose(simplex[k], x0):
                    simplex[k] = x0 - np.eye(2)[k - 1] * 0.1 * span
            res = minimize(
                lambda x: obj(x[0], x[1])[0], x0, method="Nelder-Mead",
                bounds=[(a1, b1), (a2, b2)],
                options={"maxfev": max_evals, "initial_simplex": simplex, "xatol": 1e-3, "fatol": 1e-7},
            )
            converged &= bool(res.success)
            restarts.append((float(res.fun), float(res.x[0]), float(res.x[1])))
    candidates = sorted(restarts + [seeds[0]])
    best_p, d1, d2 = candidates[0]
    tops = sorted(r[0] for r in restarts)
    rugged = len(tops) >= 2 and tops[1] - tops[0] > 1e-3

    final = ErrorObjective(p, kind, n_cut_final, obj.times, step=obj.step)
    pm, po = final.curve(d1, d2)
    k = int(np.argmin(pm))
    return OptimizationResult(
        float(d1), float(d2), float(obj.times[k]), float(pm[k]), float(po[k]),
        obj.n_evals + final.n_evals, restarts, rugged, converged,
    )


def sweep_gamma_c(
    gamma_c_list,
    configurations=tuple(CONFIGURATIONS),
    base: SystemParams | None = None,
    **kwargs,
) -> list:
    """One optimized :class:`SweepPoint` per (gamma_c, configuration)."""
    gamma_c_list = list(gamma_c_list)
    if not gamma_c_list:
        raise ConfigError("gamma_c list is empty")
    if any(g <= 0 for g in gamma_c_list):
        raise ConfigError("gamma_c values must be positive")
    base = base or SystemParams()
    out = []
    for gc in gamma_c_list:
        for cfg in configurations:
            q, kind = configure(base.replace(gamma_c=float(gc)), cfg)
            r = minimize_error(q, kind, **kwargs)
            _, kappa_on, deph_on = CONFIGURATIONS[cfg]
            out.append(SweepPoint(float(gc), cfg, r.delta1, r.delta2, r.T_interact, r.p_e_m, r.p_e_opt, kind, kappa_on, deph_on))
    return out


def write_sweep_csv(points, path, header: str = "") -> None:
    with open(path, "w") as f:
        for line in header.splitlines():
            f.write(f"# {line}\n")
        f.write("gamma_c,config,delta1,delta2,T_interact,p_e_m,p_e_opt\n")
        for s in points:
            f.write(
                f"{s.gamma_c:.12g},{s.config},{s.best_delta1:.12g},{s.best_delta2:.12g},"
                f"{s.best_T_interact:.12g},{s.p_e_m:.12g},{s.p_e_opt:.12g}\n"
            )
