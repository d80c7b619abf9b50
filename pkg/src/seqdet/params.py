"""Physical parameter sets.

All rates, detunings and couplings are in units of the atom's 0-1 decay rate
``gamma01`` (which is therefore 1), times in units of ``1/gamma01``, hbar = 1.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import pi, sqrt

__all__ = [
    "GAMMA01_SI",
    "ProbeParams",
    "SystemParams",
    "dephasing_rate_from_tphi",
    "resonator_rate_from_t1",
    "headline_params",
    "kappa0_comparison_params",
    "readout_params",
    "to_si_time",
    "to_si_rate",
]

#: gamma01 in rad/s used for display conversions only.
GAMMA01_SI = 2 * pi * 10e6


def dephasing_rate_from_tphi(t_phi: float, gamma01_si: float = GAMMA01_SI) -> float:
    """gamma11 / gamma01 = 2 / (T_phi * gamma01)."""
    return 2.0 / (t_phi * gamma01_si)


def resonator_rate_from_t1(t1: float, gamma01_si: float = GAMMA01_SI) -> float:
    """kappa / gamma01 = 1 / (T_1 * gamma01)."""
    return 1.0 / (t1 * gamma01_si)


def to_si_time(t: float, gamma01_si: float = GAMMA01_SI) -> float:
    return t / gamma01_si


def to_si_rate(rate: float, gamma01_si: float = GAMMA01_SI) -> float:
    return rate * gamma01_si


@dataclass(frozen=True)
class ProbeParams:
    """Homodyne probe stage settings."""

    Omega: float = 0.2
    phi: float = pi / 2
    delta1_probe: float = 0.1
    T_probe: float = 500.0
    dt: float = 0.01
    n_traj: int = 10_000
    base_seed: int = 0

    def __post_init__(self):
        if self.T_probe <= 0:
            raise ValueError("T_probe must be positive")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.dt > self.T_probe / 1000 * (1 + 1e-12):
            raise ValueError(f"dt = {self.dt} exceeds T_probe/1000 = {self.T_probe / 1000}")
        if int(self.n_traj) != self.n_traj or self.n_traj < 1:
            raise ValueError("n_traj must be a positive integer")
        object.__setattr__(self, "n_traj", int(self.n_traj))
        object.__setattr__(self, "base_seed", int(self.base_seed))

    @property
    def n_steps(self) -> int:
        return int(round(self.T_probe / self.dt))


@dataclass(frozen=True)
class SystemParams:
    """Rates, detunings and stage durations of one detector configuration.

    ``gamma22`` defaults to ``2 * gamma11``; passing a different value requires
    ``override_gamma22=True``.
    """

    gamma01: float = 1.0
    gamma12: float = 0.1
    gamma_c: float = 0.1
    kappa: float = 3.2e-5
    gamma11: float = 3.2e-3
    gamma22: float | None = None
    delta1: float = -1.380
    delta2: float = -96.89
    g: float = 7.0
    alpha: complex = sqrt(3.0)
    T_interact: float = 92.0
    probe: ProbeParams = field(default_factory=ProbeParams)
    photon_present: bool = True
    override_gamma22: bool = False

    def __post_init__(self):
        if self.gamma22 is None:
            object.__setattr__(self, "gamma22", 2.0 * self.gamma11)
        elif not self.override_gamma22 and abs(self.gamma22 - 2.0 * self.gamma11) > 1e-15:
            raise ValueError(
                "gamma22 must equal 2*gamma11 unless override_gamma22=True "
                f"(got gamma11={self.gamma11}, gamma22={self.gamma22})"
            )
        for name in ("gamma01", "gamma12", "gamma_c", "kappa", "gamma11", "gamma22"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.T_interact <= 0:
            raise ValueError("T_interact must be positive")
        object.__setattr__(self, "alpha", complex(self.alpha))

    def replace(self, **changes) -> "SystemParams":
        # keep gamma22 tied to gamma11 unless it was overridden or is being set
        if "gamma11" in changes and "gamma22" not in changes and not self.override_gamma22:
            changes["gamma22"] = None
        return replace(self, **changes)

    @property
    def chi(self) -> float:
        """Dispersive shift g^2 / (delta1 + delta2)."""
        return self.g ** 2 / (self.delta1 + self.delta2)


def headline_params(**changes) -> SystemParams:
    """Headline configuration: gamma_c = 0.1 with all imperfections."""
    return SystemParams().replace(**changes) if changes else SystemParams()


def kappa0_comparison_params(**changes) -> SystemParams:
    """Earlier-proposal parameters with kappa = 0 and no dephasing.

    The interaction time is not given for this set; it defaults to the
    longest allowed window 10 / gamma_c, where the error has saturated.
    """
    p = SystemParams(
        gamma12=0.1, gamma_c=0.1, kappa=0.0, gamma11=0.0, delta1=-0.8, delta2=-18.0,
        g=2.45, T_interact=100.0,
    )
    return p.replace(**changes) if changes else p


def readout_params(**changes) -> SystemParams:
    """Histogram configuration: headline interaction plus the probe settings."""
    p = SystemParams(T_interact=92.0, probe=ProbeParams())
    return p.replace(**changes) if changes else p
