"""Tensor-product Hilbert space bookkeeping for the source/atom/resonator system.

Everything here is dense: the largest space used (2 x 3 x 35) has dimension 210.
Subsystem ordering is always ``(source, atom, resonator)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, prod

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatchError, SubsystemError, TruncationError

__all__ = [
    "HilbertSpace",
    "Operator",
    "StateVector",
    "DensityMatrix",
    "detector_space",
    "destroy",
    "sigma",
    "coherent_amplitudes",
    "coherent_state",
    "displacement_matrix",
    "displacement_operator",
    "partial_trace",
    "embed",
    "trace_distance",
]


@dataclass(frozen=True)
class HilbertSpace:
    """Ordered tensor product of named finite-dimensional factors."""

    dims: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        dims = tuple(int(d) for d in self.dims)
        labels = tuple(self.labels)
        if len(dims) != len(labels):
            raise DimensionMismatchError("dims and labels must have equal length")
        if any(d < 1 for d in dims):
            raise DimensionMismatchError(f"subsystem dimensions must be >= 1, got {dims}")
        if len(set(labels)) != len(labels):
            raise DimensionMismatchError(f"duplicate subsystem labels {labels}")
        if "resonator" in labels and dims[labels.index("resonator")] < 2:
            raise DimensionMismatchError("resonator cutoff must be >= 2")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "labels", labels)

    @property
    def dim(self) -> int:
        return prod(self.dims)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise SubsystemError(f"unknown subsystem {label!r}; have {self.labels}") from None

    def subdim(self, label: str) -> int:
        return self.dims[self.index(label)]

    def subspace(self, labels) -> "HilbertSpace":
        if isinstance(labels, str):
            labels = (labels,)
        idx = sorted(self.index(lab) for lab in labels)
        return HilbertSpace(tuple(self.dims[i] for i in idx), tuple(self.labels[i] for i in idx))

    def without(self, label: str) -> "HilbertSpace":
        self.index(label)
        return self.subspace([lab for lab in self.labels if lab != label])

    @property
    def n_cut(self) -> int:
        return self.subdim("resonator")

    def identity(self) -> "Operator":
        return Operator(self, np.eye(self.dim, dtype=complex))


def detector_space(n_cut: int = 30, with_source: bool = True) -> HilbertSpace:
    """Default space: source (2) x atom (3) x resonator (n_cut)."""
    if with_source:
        return HilbertSpace((2, 3, n_cut), ("source", "atom", "resonator"))
    return HilbertSpace((3, n_cut), ("atom", "resonator"))


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=complex)
    a.flags.writeable = False
    return a


class Operator:
    """Dense operator on a :class:`HilbertSpace`. Immutable."""

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix):
        m = _frozen(matrix)
        if m.shape != (space.dim, space.dim):
            raise DimensionMismatchError(
                f"operator shape {m.shape} does not match space dimension {space.dim}"
            )
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", m)

    def __setattr__(self, name, value):
        raise AttributeError("Operator is immutable")

    def _check(self, other: "Operator"):
        if other.space != self.space:
            raise DimensionMismatchError("operators live on different spaces")

    def dag(self) -> "Operator":
        return Operator(self.space, self.matrix.conj().T)

    def __add__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix + other.matrix)

    def __sub__(self, other):
        self._check(other)
        return Operator(self.space, self.matrix - other.matrix)

    def __neg__(self):
        return Operator(self.space, -self.matrix)

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            return NotImplemented
        return Operator(self.space, complex(scalar) * self.matrix)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, Operator):
            self._check(other)
            return Operator(self.space, self.matrix @ other.matrix)
        return NotImplemented

    def is_hermitian(self, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.matrix, self.matrix.conj().T, atol=atol, rtol=0))

    def __repr__(self):
        return f"Operator(dims={self.space.dims}, labels={self.space.labels})"


class StateVector:
    """Normalized pure state."""

    __slots__ = ("space", "amplitudes")

    def __init__(self, space: HilbertSpace, amplitudes, atol: float = 1e-10):
        v = _frozen(amplitudes).reshape(-1)
        if v.shape != (space.dim,):
            raise DimensionMismatchError(f"state length {v.shape[0]} != space dimension {space.dim}")
        if abs(np.linalg.norm(v) - 1.0) > atol:
            raise ValueError(f"state not normalized (norm {np.linalg.norm(v):.3e})")
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "amplitudes", v)

    def __setattr__(self, name, value):
        raise AttributeError("StateVector is immutable")

    def projector(self) -> "DensityMatrix":
        v = self.amplitudes
        return DensityMatrix(self.space, np.outer(v, v.conj()))

    def expect(self, op: Operator) -> complex:
        return complex(self.amplitudes.conj() @ op.matrix @ self.amplitudes)

    def tensor(self, other: "StateVector") -> "StateVector":
        space = HilbertSpace(self.space.dims + other.space.dims, self.space.labels + other.space.labels)
        return StateVector(space, np.kron(self.amplitudes, other.amplitudes))


class DensityMatrix:
    """Density operator; validated on construction unless ``check=False``.

    The default tolerances are the strict ones for freshly built states:
    Hermitian to 1e-10, unit trace to 1e-8, eigenvalues >= -1e-8.
    """

    __slots__ = ("space", "matrix")

    def __init__(self, space: HilbertSpace, matrix, check: bool = True):
        m = _frozen(matrix)
        if m.shape != (space.dim, space.dim):
            raise DimensionMismatchError(
                f"density matrix shape {m.shape} does not match space dimension {space.dim}"
            )
        object.__setattr__(self, "space", space)
        object.__setattr__(self, "matrix", m)
        if check:
            self.validate()

    def __setattr__(self, name, value):
        raise AttributeError("DensityMatrix is immutable")

    def validate(self, herm_tol: float = 1e-10, trace_tol: float = 1e-8, eig_tol: float = 1e-8) -> "DensityMatrix":
        from .errors import InvariantViolation

        m = self.matrix
        herm = np.max(np.abs(m - m.conj().T)) if m.size else 0.0
        if herm > herm_tol:
            raise InvariantViolation(f"density matrix not Hermitian (max deviation {herm:.2e})")
        tr = np.trace(m).real
        if abs(tr - 1.0) > trace_tol:
            raise InvariantViolation(f"density matrix trace {tr!r} deviates from 1")
        lam = np.linalg.eigvalsh(0.5 * (m + m.conj().T))[0]
        if lam < -eig_tol:
            raise InvariantViolation(f"density matrix has negative eigenvalue {lam:.3e}")
        return self

    @classmethod
    def from_state(cls, psi: StateVector) -> "DensityMatrix":
        return psi.projector()

    @property
    def trace(self) -> float:
        return float(np.trace(self.matrix).real)

    def expect(self, op: Operator) -> complex:
        if op.space != self.space:
            raise DimensionMismatchError("operator and state live on different spaces")
        return complex(np.trace(op.matrix @ self.matrix))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def tensor(self, other: "DensityMatrix") -> "DensityMatrix":
        space = HilbertSpace(self.space.dims + other.space.dims, self.space.labels + other.space.labels)
        return DensityMatrix(space, np.kron(self.matrix, other.matrix), check=False)


def destroy(n: int) -> np.ndarray:
    """Truncated annihilation operator on an ``n``-level oscillator."""
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


def sigma(mu: int, nu: int, dim: int = 3) -> np.ndarray:
    """Atomic transition operator |mu><nu|."""
    out = np.zeros((dim, dim), dtype=complex)
    out[mu, nu] = 1.0
    return out


def _resonator_dim(space) -> int:
    if isinstance(space, (int, np.integer)):
        return int(space)
    return space.subdim("resonator")


def _check_amplitude(alpha: complex, n_cut: int):
    if abs(alpha) ** 2 > n_cut / 4:
        raise TruncationError(
            f"|alpha|^2 = {abs(alpha) ** 2:.4g} exceeds n_cut/4 = {n_cut / 4:.4g}; raise the cutoff"
        )


def coherent_amplitudes(alpha: complex, n_cut: int) -> np.ndarray:
    """Fock amplitudes of |alpha>, truncated to ``n_cut`` levels and renormalized."""
    alpha = complex(alpha)
    n = np.arange(n_cut)
    if alpha == 0:
        c = np.zeros(n_cut, dtype=complex)
        c[0] = 1.0
        return c
    # log-space to stay finite for large n
    logmag = -abs(alpha) ** 2 / 2 + n * np.log(abs(alpha)) - 0.5 * np.array([lgamma(k + 1) for k in n])
    c = np.exp(logmag) * np.exp(1j * np.angle(alpha) * n)
    return c / np.linalg.norm(c)


def coherent_state(alpha: complex, space) -> StateVector:
    """Coherent state of the resonator mode.

    ``space`` may be a composite space containing a ``"resonator"`` factor, a
    single-mode space, or simply the cutoff as an integer. The result always
    lives on the single-mode resonator space.
    """
    n_cut = _resonator_dim(space)
    _check_amplitude(alpha, n_cut)
    return StateVector(HilbertSpace((n_cut,), ("resonator",)), coherent_amplitudes(alpha, n_cut))


def displacement_matrix(alpha: complex, n_cut: int) -> np.ndarray:
    """exp(alpha a^dag - alpha^* a) on the truncated single-mode space."""
    a = destroy(n_cut)
    return sla.expm(complex(alpha) * a.conj().T - np.conj(alpha) * a)


def displacement_operator(alpha: complex, space) -> Operator:
    """D(alpha) embedded on the resonator factor of ``space``."""
    if isinstance(space, (int, np.integer)):
        space = HilbertSpace((int(space),), ("resonator",))
    n_cut = space.subdim("resonator")
    _check_amplitude(alpha, n_cut)
    return embed(displacement_matrix(alpha, n_cut), "resonator", space)


def embed(local_op, target: str, space: HilbertSpace) -> Operator:
    """Tensor ``local_op`` on ``target`` with identities on every other factor."""
    mat = local_op.matrix if isinstance(local_op, Operator) else np.asarray(local_op, dtype=complex)
    k = space.index(target)
    if mat.shape != (space.dims[k], space.dims[k]):
        raise DimensionMismatchError(
            f"local operator shape {mat.shape} does not match {target} dimension {space.dims[k]}"
        )
    left = prod(space.dims[:k])
    right = prod(space.dims[k + 1:])
    full = np.kron(np.kron(np.eye(left), mat), np.eye(right))
    return Operator(space, full)


def partial_trace(rho, keep, space: HilbertSpace | None = None):
    """Reduced state on the subsystem(s) named in ``keep``.

    Accepts a :class:`DensityMatrix` (returns one) or a raw matrix together with
    ``space`` (returns a raw matrix).
    """
    raw = not isinstance(rho, DensityMatrix)
    if raw:
        if space is None:
            raise TypeError("space is required when passing a raw matrix")
        mat = np.asarray(rho)
    else:
        space, mat = rho.space, rho.matrix
    if isinstance(keep, str):
        keep = (keep,)
    kidx = sorted(space.index(lab) for lab in keep)
    n = len(space.dims)
    t = mat.reshape(space.dims + space.dims)
    # einsum subscripts: traced factors share the same letter on both sides
    letters = "abcdefghijklmnopqrstuvwxyz"
    row = [letters[i] for i in range(n)]
    col = [letters[i] if i not in kidx else letters[n + i] for i in range(n)]
    out = [letters[i] for i in kidx] + [letters[n + i] for i in kidx]
    red = np.einsum("".join(row) + "".join(col) + "->" + "".join(out), t)
    sub = space.subspace([space.labels[i] for i in kidx])
    red = red.reshape(sub.dim, sub.dim)
    if raw:
        return red
    return DensityMatrix(sub, red, check=False)


def trace_distance(a, b) -> float:
    """Half the trace norm of ``a - b``."""
    am = a.matrix if isinstance(a, DensityMatrix) else np.asarray(a)
    bm = b.matrix if isinstance(b, DensityMatrix) else np.asarray(b)
    d = am - bm
    return 0.5 * float(np.abs(np.linalg.eigvalsh(0.5 * (d + d.conj().T))).sum())
