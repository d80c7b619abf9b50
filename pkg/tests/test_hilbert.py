import numpy as np
import pytest
from hypothesis import given, strategies as st

from seqdet.errors import DimensionMismatchError, InvariantViolation, SubsystemError, TruncationError
from seqdet.hilbert import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    StateVector,
    coherent_state,
    destroy,
    detector_space,
    displacement_matrix,
    displacement_operator,
    embed,
    partial_trace,
    sigma,
)

from conftest import random_density, random_pure


def number_expect(psi):
    n = np.arange(psi.amplitudes.size)
    return float(np.sum(n * np.abs(psi.amplitudes) ** 2))


class TestHilbertSpace:
    def test_default_dims(self):
        s = detector_space(30)
        assert s.dims == (2, 3, 30)
        assert s.labels == ("source", "atom", "resonator")
        assert s.dim == 180

    def test_without_source(self):
        assert detector_space(30, with_source=False).dim == 90

    @pytest.mark.parametrize("dims", [(2, 0, 5), (2, 3, 1)])
    def test_invalid_dims(self, dims):
        with pytest.raises(ValueError):
            HilbertSpace(dims, ("source", "atom", "resonator"))

    def test_unknown_label(self):
        with pytest.raises(SubsystemError):
            detector_space(5).index("cavity")


class TestOperatorTypes:
    def test_operator_shape_checked(self):
        with pytest.raises(DimensionMismatchError):
            Operator(detector_space(4), np.eye(3))

    def test_state_vector_norm_checked(self):
        s = HilbertSpace((3,), ("atom",))
        with pytest.raises(ValueError):
            StateVector(s, [1.0, 1.0, 0.0])

    def test_density_validation(self, rng):
        s = HilbertSpace((4,), ("resonator",))
        DensityMatrix(s, random_density(4, rng))
        with pytest.raises(InvariantViolation):
            DensityMatrix(s, np.diag([1.2, -0.2, 0, 0]))
        with pytest.raises(InvariantViolation):
            DensityMatrix(s, np.eye(4) / 2)


class TestCoherentState:
    def test_vacuum(self):
        psi = coherent_state(0, 30)
        assert psi.amplitudes[0] == pytest.approx(1.0)
        assert number_expect(psi) == pytest.approx(0.0, abs=1e-15)

    def test_mean_photon_number_three(self):
        psi = coherent_state(np.sqrt(3), detector_space(30))
        assert abs(number_expect(psi) - 3.0) < 1e-6

    def test_complex_amplitude_against_poisson(self):
        alpha = 1 + 1j
        psi = coherent_state(alpha, 30)
        assert np.linalg.norm(psi.amplitudes) == pytest.approx(1.0, abs=1e-12)
        a = destroy(30)
        assert abs(psi.amplitudes.conj() @ a @ psi.amplitudes - alpha) < 1e-6
        # independent oracle: Poisson weights, untruncated
        from math import exp, factorial
        w = [exp(-2.0) * 2.0 ** n / factorial(n) for n in range(30)]
        np.testing.assert_allclose(np.abs(psi.amplitudes) ** 2, w, atol=1e-12)

    def test_truncation_guard(self):
        with pytest.raises(TruncationError):
            coherent_state(3.0, 30)


class TestDisplacement:
    def test_zero_is_identity(self):
        s = detector_space(8)
        np.testing.assert_allclose(displacement_operator(0, s).matrix, np.eye(s.dim), atol=1e-14)

    def test_displaced_vacuum_is_coherent(self):
        d = displacement_matrix(np.sqrt(3), 30)
        np.testing.assert_allclose(d[:, 0], coherent_state(np.sqrt(3), 30).amplitudes, atol=1e-6)

    def test_inverse_on_low_fock_subspace(self):
        # exp(-A) exp(A) is exact on the truncated space; the check covers n <= 10
        prod = displacement_matrix(-np.sqrt(3), 30) @ displacement_matrix(np.sqrt(3), 30)
        np.testing.assert_allclose(prod[:11, :11], np.eye(11), atol=1e-5)

    def test_truncated_matrix_differs_from_infinite_operator_at_edge(self):
        from seqdet.metrics import displacement_elements
        d = displacement_matrix(np.sqrt(3), 30)
        exact = displacement_elements(np.sqrt(3), 30)
        np.testing.assert_allclose(d[:15, :15], exact[:15, :15], atol=1e-6)
        assert np.abs(d[-1, -1] - exact[-1, -1]) > 1e-3

    def test_embedded_acts_on_resonator(self, small_space):
        D = displacement_operator(0.5, small_space)
        assert np.allclose(D.matrix @ D.matrix.conj().T, np.eye(small_space.dim), atol=1e-10)

    def test_truncation_guard(self):
        with pytest.raises(TruncationError):
            displacement_operator(2.0, 10)


class TestPartialTrace:
    def test_product_state(self, rng):
        s = HilbertSpace((2, 3), ("source", "atom"))
        a, b = random_density(2, rng), random_density(3, rng)
        rho = DensityMatrix(s, np.kron(a, b))
        np.testing.assert_allclose(partial_trace(rho, "source").matrix, a, atol=1e-14)
        np.testing.assert_allclose(partial_trace(rho, "atom").matrix, b, atol=1e-14)

    def test_bell_pair(self):
        s = detector_space(2)
        v = np.zeros(s.dim, complex)
        # (|0,0> + |1,1>)/sqrt2 on source x atom, resonator vacuum
        v[0 * 6 + 0 * 2 + 0] = v[1 * 6 + 1 * 2 + 0] = 1 / np.sqrt(2)
        red = partial_trace(DensityMatrix(s, np.outer(v, v.conj())), "source")
        np.testing.assert_allclose(red.matrix, np.eye(2) / 2, atol=1e-14)

    def test_against_index_summation(self, rng, qubit_space):
        psi = random_pure(qubit_space.dim, rng)
        rho = np.outer(psi, psi.conj())
        t = rho.reshape(2, 3, 4, 2, 3, 4)
        oracle = np.zeros((3, 3), complex)
        for i in range(3):
            for j in range(3):
                for s in range(2):
                    for n in range(4):
                        oracle[i, j] += t[s, i, n, s, j, n]
        red = partial_trace(DensityMatrix(qubit_space, rho), "atom")
        np.testing.assert_allclose(red.matrix, oracle, atol=1e-13)
        assert abs(np.trace(red.matrix) - 1) < 1e-10

    def test_two_kept_factors(self, rng, qubit_space):
        rho = random_density(qubit_space.dim, rng)
        red = partial_trace(rho, ("atom", "resonator"), qubit_space)
        assert red.shape == (12, 12)
        np.testing.assert_allclose(partial_trace(red, "atom", qubit_space.subspace(["atom", "resonator"])),
                                   partial_trace(rho, "atom", qubit_space), atol=1e-13)

    def test_unknown_label(self, small_space):
        rho = DensityMatrix(small_space, np.eye(small_space.dim) / small_space.dim)
        with pytest.raises(SubsystemError):
            partial_trace(rho, "cavity")

    @given(st.integers(0, 2**32 - 1), st.sampled_from(["source", "atom", "resonator"]))
    def test_reduced_state_valid(self, seed, keep):
        s = HilbertSpace((2, 3, 4), ("source", "atom", "resonator"))
        rho = DensityMatrix(s, random_density(s.dim, np.random.default_rng(seed), rank=3))
        partial_trace(rho, keep).validate()


class TestEmbedAndAlgebra:
    def test_embed_identity(self, small_space):
        np.testing.assert_allclose(embed(np.eye(3), "atom", small_space).matrix, np.eye(small_space.dim))

    def test_embed_lowering(self, small_space):
        a = embed(destroy(6), "resonator", small_space).matrix
        v = np.zeros(small_space.dim)
        v[1] = 1.0  # |src 0, atom 0, n 1>
        out = a @ v
        assert out[0] == pytest.approx(1.0) and np.count_nonzero(out) == 1

    def test_different_factors_commute(self, small_space):
        a = embed(destroy(6), "resonator", small_space).matrix
        s = embed(sigma(0, 1), "atom", small_space).matrix
        assert np.abs(a @ s - s @ a).max() == 0

    def test_dimension_mismatch(self, small_space):
        with pytest.raises(DimensionMismatchError):
            embed(np.eye(4), "atom", small_space)

    @pytest.mark.parametrize("mu,nu,rho_,lam", [(m, n, r, l) for m in range(3) for n in range(3) for r in range(3) for l in range(3)])
    def test_sigma_products(self, mu, nu, rho_, lam):
        expected = sigma(mu, lam) if nu == rho_ else np.zeros((3, 3))
        np.testing.assert_array_equal(sigma(mu, nu) @ sigma(rho_, lam), expected)

    @given(st.integers(0, 2**32 - 1))
    def test_canonical_commutator(self, seed):
        n = 20
        rng = np.random.default_rng(seed)
        psi = np.zeros(n, complex)
        psi[: n - 5] = random_pure(n - 5, rng)
        a = destroy(n)
        comm = a @ a.conj().T - a.conj().T @ a
        assert abs(psi.conj() @ comm @ psi - 1) < 1e-8

    @given(st.floats(0, 2 * np.pi), st.floats(0, 2 * np.pi))
    def test_embed_preserves_unitary_norm(self, t1, t2):
        u = np.diag(np.exp(1j * np.array([0, t1, t2])))
        U = embed(u, "atom", detector_space(3)).matrix
        assert np.linalg.norm(U, 2) == pytest.approx(1.0)
        np.testing.assert_allclose(U @ U.conj().T, np.eye(18), atol=1e-12)
