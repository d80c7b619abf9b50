"""State-discrimination error probabilities and Wigner functions."""
from __future__ import annotations

from dataclasses import dataclass
from math import pi

import numpy as np
from scipy.special import eval_genlaguerre, gammaln

from .errors import DimensionMismatchError
from .hilbert import DensityMatrix, coherent_amplitudes, _check_amplitude

__all__ = [
    "trace_norm",
    "p_error_optimal",
    "p_error_projective",
    "WignerGrid",
    "wigner",
    "displacement_elements",
]


def _mat(rho) -> np.ndarray:
    return rho.matrix if isinstance(rho, DensityMatrix) else np.asarray(rho, dtype=complex)


def _pair(rho0, rho1):
    if isinstance(rho0, DensityMatrix) and isinstance(rho1, DensityMatrix) and rho0.space != rho1.space:
        raise DimensionMismatchError("states live on different spaces")
    a, b = _mat(rho0), _mat(rho1)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"state shapes differ: {a.shape} vs {b.shape}")
    return a, b


def trace_norm(d: np.ndarray) -> float:
    """Sum of absolute eigenvalues of the Hermitian part of ``d``."""
    h = 0.5 * (d + d.conj().T)
    return float(np.abs(np.linalg.eigvalsh(h)).sum())


def p_error_optimal(rho0, rho1) -> float:
    """Minimum error of any measurement discriminating two equiprobable states."""
    a, b = _pair(rho0, rho1)
    return min(max(0.5 - 0.25 * trace_norm(a - b), 0.0), 0.5)


def p_error_projective(rho0, rho1, alpha: complex) -> float:
    """Error of the two-outcome test M0 = |alpha><alpha|, M1 = 1 - M0.

    Outcome 0 declares "no photon"; errors are weighted 50/50.
    """
    a, b = _pair(rho0, rho1)
    n = a.shape[0]
    _check_amplitude(alpha, n)
    v = coherent_amplitudes(alpha, n)
    p0_in_0 = float(np.real(v.conj() @ a @ v))
    p1_in_0 = float(np.real(v.conj() @ b @ v))
    tr0 = float(np.real(np.trace(a)))
    return 0.5 * (tr0 - p0_in_0) + 0.5 * p1_in_0


def displacement_elements(gamma, n: int) -> np.ndarray:
    """Matrix elements ``<m|D(gamma)|k>`` for ``m, k < n``; shape ``(n, n) + gamma.shape``.

    Uses the closed Laguerre form, so the values are those of the untruncated
    operator (no matrix-exponential edge effects).
    """
    g = np.asarray(gamma, dtype=complex)
    x = np.abs(g) ** 2
    out = np.empty((n, n) + g.shape, complex)
    lf = gammaln(np.arange(n) + 1.0)
    for m in range(n):
        for k in range(m + 1):
            pref = np.exp(0.5 * (lf[k] - lf[m]) - 0.5 * x)
            lag = eval_genlaguerre(k, m - k, x)
            out[m, k] = pref * g ** (m - k) * lag
            if k != m:
                out[k, m] = pref * (-g.conj()) ** (m - k) * lag
    return out


@dataclass(frozen=True)
class WignerGrid:
    """Wigner function sampled on a rectangle, ``values[i, j]`` at ``(x[j], p[i])``."""

    x_range: tuple
    p_range: tuple
    resolution: int
    values: np.ndarray

    @property
    def x(self) -> np.ndarray:
        return np.linspace(*self.x_range, self.resolution)

    @property
    def p(self) -> np.ndarray:
        return np.linspace(*self.p_range, self.resolution)

    @property
    def cell_area(self) -> float:
        dx = (self.x_range[1] - self.x_range[0]) / (self.resolution - 1)
        dp = (self.p_range[1] - self.p_range[0]) / (self.resolution - 1)
        return dx * dp

    def integral(self) -> float:
        return float(self.values.sum() * self.cell_area)

    def to_csv(self, path, header: str = "") -> None:
        X, P = np.meshgrid(self.x, self.p)
        with open(path, "w") as f:
            for line in header.splitlines():
                f.write(f"# {line}\n")
            f.write("x,p,w\n")
            for xv, pv, wv in zip(X.ravel(), P.ravel(), self.values.ravel()):
                f.write(f"{xv:.12g},{pv:.12g},{wv:.12g}\n")


def wigner(
    rho,
    x_range=(-4.5, 4.5),
    p_range=(-4.5, 4.5),
    resolution: int = 151,
    chunk: int = 4096,
) -> WignerGrid:
    """Wigner function of a single-mode state via the displaced-parity formula.

    The phase-space point is ``beta = x + i p`` so that a coherent state
    ``|alpha>`` peaks at ``(Re alpha, Im alpha)``.
    """
    r = _mat(rho)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise DimensionMismatchError("wigner needs a square single-mode density matrix")
    if resolution < 2:
        raise ValueError("resolution must be at least 2")
    n = r.shape[0]
    x = np.linspace(*x_range, resolution)
    p = np.linspace(*p_range, resolution)
    beta = (x[None, :] + 1j * p[:, None]).ravel()
    parity = (-1.0) ** np.arange(n)
    out = np.empty(beta.shape, complex)
    for s in range(0, beta.size, chunk):
        g = 2.0 * beta[s:s + chunk]
        # W = 2/pi sum_{n,m} rho[n, m] (-1)^n <m|D(2 beta)|n>
        d = displacement_elements(g, n)
        out[s:s + chunk] = np.einsum("nm,mng->g", r * parity[:, None], d)
    w = (2.0 / pi) * out
    scale = max(1.0, float(np.abs(w.real).max()))
    if np.abs(w.imag).max() > 1e-10 * scale:
        raise ValueError("Wigner function has an imaginary part; is rho Hermitian?")
    return WignerGrid(tuple(map(float, x_range)), tuple(map(float, p_range)), resolution, w.real.reshape(resolution, resolution))
