import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, strategies as st

from seqdet.errors import DegenerateDetuningError, DimensionMismatchError, InvariantViolation
from seqdet.hilbert import (
    DensityMatrix,
    HilbertSpace,
    Operator,
    coherent_amplitudes,
    destroy,
    detector_space,
    embed,
    partial_trace,
    sigma,
    trace_distance,
)
from seqdet.lindblad import (
    CascadedPair,
    IntegratorConfig,
    LindbladModel,
    atom_op,
    build_dispersive_hamiltonian,
    build_full_hamiltonian,
    build_model,
    evolve,
    liouvillian_apply,
)
from seqdet.params import SystemParams, headline_params

from conftest import random_density

CLOSED = dict(gamma01=0.0, gamma12=0.0, gamma_c=0.0, kappa=0.0, gamma11=0.0)


def basis_state(space, **idx):
    v = np.zeros(space.dims)
    v[tuple(idx.get(lab, 0) for lab in space.labels)] = 1.0
    v = v.ravel()
    return DensityMatrix(space, np.outer(v, v))


def expect(space, local, label, states):
    op = embed(local, label, space).matrix
    return np.array([np.trace(op @ r.matrix).real for _, r in states])


def vec_superoperator(H, collapse, cascade):
    """Column-stacking superoperator built from vec(A X B) = (B^T kron A) vec(X)."""
    d = H.shape[0]
    eye = np.eye(d)
    spre = lambda A: np.kron(eye, A)
    spost = lambda B: np.kron(B.T, eye)
    L = -1j * (spre(H) - spost(H))
    for rate, A in collapse:
        Ad = A.conj().T
        L += rate * (np.kron(Ad.T, A) - 0.5 * spre(Ad @ A) - 0.5 * spost(Ad @ A))
    if cascade:
        k, c, s = cascade
        sd, cd = s.conj().T, c.conj().T
        # [c rho, s^dag] + [s, rho c^dag]
        L += k * (np.kron(sd.T, c) - spre(sd @ c) + np.kron(cd.T, s) - spost(cd @ s))
    return L


class TestHamiltonians:
    def test_zero_operator(self):
        s = detector_space(5)
        p = SystemParams(g=0.0, delta1=0.0, delta2=0.0)
        assert np.abs(build_full_hamiltonian(p, s).matrix).max() == 0

    @given(
        st.floats(-50, 50), st.floats(-150, 150), st.floats(0, 10),
        st.floats(0, 1), st.floats(-1, 1), st.booleans(),
    )
    def test_full_hamiltonian_hermitian(self, d1, d2, g, omega, d1p, probe):
        from seqdet.params import ProbeParams
        p = SystemParams(delta1=d1, delta2=d2, g=g, probe=ProbeParams(Omega=omega, delta1_probe=d1p))
        H = build_full_hamiltonian(p, detector_space(5), include_probe=probe).matrix
        assert np.abs(H - H.conj().T).max() < 1e-12

    def test_resonant_jaynes_cummings(self):
        # |atom 1, n 1> exchanges with |atom 2, n 0> at frequency g
        s = detector_space(4, with_source=False)
        g = 1.3
        p = SystemParams(delta1=0.0, delta2=0.0, g=g, **CLOSED)
        m = build_model(p, s)
        t = np.linspace(0, 3, 13)
        out = evolve(m, basis_state(s, atom=1, resonator=1), IntegratorConfig(dt=1e-3, sample_times=t))
        np.testing.assert_allclose(expect(s, sigma(1, 1), "atom", out), np.cos(g * t) ** 2, atol=1e-6)

    def test_probe_uses_probe_detuning(self):
        s = detector_space(3, with_source=False)
        p = SystemParams(delta1=-1.0, g=0.0)
        H = build_full_hamiltonian(p, s, include_probe=True).matrix
        s11 = atom_op(1, 1, s).matrix
        assert np.trace(s11 @ H).real / 3 == pytest.approx(p.probe.delta1_probe)
        assert np.trace(atom_op(1, 0, s).matrix @ H) / 3 == pytest.approx(p.probe.Omega)


class TestDispersive:
    def test_headline_shift(self):
        assert headline_params().chi == pytest.approx(49 / -98.27)
        assert headline_params().chi == pytest.approx(-0.4986, abs=1e-4)

    def test_zero_coupling(self):
        s = detector_space(5)
        p = SystemParams(g=0.0, delta1=-1.0)
        H = build_dispersive_hamiltonian(p, s).matrix
        np.testing.assert_allclose(H, -1.0 * atom_op(1, 1, s).matrix)

    def test_degenerate_detuning(self):
        with pytest.raises(DegenerateDetuningError):
            build_dispersive_hamiltonian(SystemParams(delta1=1.0, delta2=-1.0), detector_space(4))

    def test_full_hamiltonian_allows_degenerate(self):
        build_full_hamiltonian(SystemParams(delta1=1.0, delta2=-1.0), detector_space(4))

    def test_coherent_state_rotation(self):
        n = 30
        s = HilbertSpace((3, n), ("atom", "resonator"))
        p = headline_params(**CLOSED)
        H = build_dispersive_hamiltonian(p, s).matrix
        t = 1 / abs(p.chi)
        alpha = np.sqrt(3)
        psi = np.kron([0, 1, 0], coherent_amplitudes(alpha, n))
        out = sla.expm(-1j * H * t) @ psi
        target = np.kron([0, 1, 0], coherent_amplitudes(alpha * np.exp(1j * p.chi * t), n))
        assert abs(np.vdot(target, out)) ** 2 >= 1 - 1e-6

    def test_full_approaches_dispersive(self):
        n = 10
        s = HilbertSpace((3, n), ("atom", "resonator"))
        psi = np.kron([0, 1, 0], coherent_amplitudes(1.0, n))
        dists = []
        for scale in (1, 4, 16):
            p = SystemParams(delta1=-1.0, delta2=1.0 - 20.0 * scale, g=2.0 * np.sqrt(scale), **CLOSED)
            assert p.delta1 + p.delta2 == pytest.approx(-20.0 * scale)
            t = 5.0
            full = sla.expm(-1j * build_full_hamiltonian(p, s).matrix * t) @ psi
            disp = sla.expm(-1j * build_dispersive_hamiltonian(p, s).matrix * t) @ psi
            dists.append(trace_distance(np.outer(full, full.conj()), np.outer(disp, disp.conj())))
        assert dists[0] > dists[1] > dists[2]


@pytest.fixture(scope="module")
def full_model():
    return build_model(headline_params(kappa=0.05, gamma11=0.02), detector_space(4))


class TestLiouvillian:
    def test_amplitude_decay_generator(self):
        s = HilbertSpace((3,), ("atom",))
        m = LindbladModel(Operator(s, np.zeros((3, 3))), ((0.7, Operator(s, sigma(0, 1))),))
        out = liouvillian_apply(m, np.diag([0, 1, 0]).astype(complex))
        np.testing.assert_allclose(out, 0.7 * np.diag([1, -1, 0]), atol=1e-15)

    def test_trace_and_hermiticity_random_inputs(self, full_model):
        rng = np.random.default_rng(7)
        d = full_model.space.dim
        for _ in range(100):
            x = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            x = x + x.conj().T
            out = liouvillian_apply(full_model, x)
            assert abs(np.trace(out)) < 1e-10
            assert np.abs(out - out.conj().T).max() < 1e-10

    def test_matches_vectorized_superoperator(self, full_model, rng):
        m = full_model
        cp = m.cascaded_pair
        L = vec_superoperator(
            m.hamiltonian.matrix, [(r, op.matrix) for r, op in m.collapse_terms],
            (cp.strength, cp.source_op.matrix, cp.target_op.matrix),
        )
        rho = random_density(m.space.dim, rng)
        ref = (L @ rho.ravel(order="F")).reshape(rho.shape, order="F")
        np.testing.assert_allclose(liouvillian_apply(m, rho), ref, atol=1e-11)

    def test_superoperator_terms_match(self, full_model, rng):
        rho = random_density(full_model.space.dim, rng)
        via_terms = sum(X @ rho @ Y for X, Y in full_model.superoperator_terms())
        np.testing.assert_allclose(via_terms, liouvillian_apply(full_model, rho), atol=1e-12)

    def test_space_mismatch(self, full_model):
        with pytest.raises(DimensionMismatchError):
            liouvillian_apply(full_model, np.eye(5))

    def test_rejects_mixed_spaces(self):
        s1, s2 = detector_space(3), detector_space(4)
        with pytest.raises(DimensionMismatchError):
            LindbladModel(s1.identity(), ((1.0, s2.identity()),))


class TestCascadedToy:
    @pytest.fixture
    def toy(self):
        s = HilbertSpace((2, 2), ("source", "atom"))
        c = embed(destroy(2), "source", s)
        s01 = embed(sigma(0, 1, 2), "atom", s)
        m = LindbladModel(Operator(s, np.zeros((4, 4))), ((1.0, c), (1.0, s01)), CascadedPair(c, 1.0, s01, 1.0))
        return s, m

    def test_against_superoperator_exponential(self, toy):
        s, m = toy
        rho0 = basis_state(s, source=1)
        L = vec_superoperator(
            np.zeros((4, 4)), [(1.0, op.matrix) for _, op in m.collapse_terms],
            (1.0, m.cascaded_pair.source_op.matrix, m.cascaded_pair.target_op.matrix),
        )
        assert L.shape == (16, 16)
        times = (0.5, 1.0, 2.0, 4.0, 8.0)
        out = evolve(m, rho0, IntegratorConfig(dt=1e-3, sample_times=times))
        p11 = embed(sigma(1, 1, 2), "atom", s).matrix
        for t, r in out:
            ref = (sla.expm(L * t) @ rho0.matrix.ravel(order="F")).reshape(4, 4, order="F")
            assert np.abs(r.matrix - ref).max() < 1e-8
            assert abs(np.trace(p11 @ r.matrix).real - t * t * np.exp(-t)) < 1e-8


class TestEvolve:
    def test_trivial_model_is_static(self, rng):
        s = detector_space(3)
        rho = DensityMatrix(s, random_density(s.dim, rng))
        m = LindbladModel(Operator(s, np.zeros((s.dim, s.dim))))
        out = evolve(m, rho, IntegratorConfig(dt=0.1, sample_times=(1.0, 2.0)))
        for _, r in out:
            np.testing.assert_array_equal(r.matrix, rho.matrix)

    def test_atom_decay(self):
        s = detector_space(3, with_source=False)
        m = build_model(SystemParams(gamma12=0.0, kappa=0.0, gamma11=0.0, g=0.0), s)
        t = np.linspace(0, 5, 11)
        out = evolve(m, basis_state(s, atom=1), IntegratorConfig(dt=1e-3, sample_times=t))
        np.testing.assert_allclose(expect(s, sigma(1, 1), "atom", out), np.exp(-t), atol=1e-7)

    @pytest.mark.parametrize("method", ["rk4", "adaptive"])
    def test_source_decay(self, method):
        s = detector_space(3)
        gc = 0.37
        p = SystemParams(gamma01=0.0, gamma12=0.0, gamma_c=gc, kappa=0.0, gamma11=0.0, g=0.0)
        t = np.linspace(0, 6, 7)
        cfg = IntegratorConfig(method=method, dt=1e-2, tolerance=1e-10, sample_times=t)
        out = evolve(build_model(p, s), basis_state(s, source=1), cfg)
        n = destroy(2).conj().T @ destroy(2)
        np.testing.assert_allclose(expect(s, n, "source", out), np.exp(-gc * t), atol=1e-7)

    def test_unitary_limit_preserves_purity(self):
        s = detector_space(5)
        p = SystemParams(delta1=-0.5, delta2=-3.0, g=1.0, **CLOSED)
        v = np.zeros(s.dim)
        v[0] = v[s.dim // 2 + 1] = 1 / np.sqrt(2)
        out = evolve(build_model(p, s), DensityMatrix(s, np.outer(v, v)), IntegratorConfig(dt=2e-3, sample_times=(2.0,)))
        r = out[-1][1].matrix
        assert abs(np.trace(r @ r).real - 1) < 1e-8

    def test_step_halving_and_validity(self):
        s = detector_space(5)
        p = headline_params(alpha=1.0, kappa=0.01, gamma11=0.01)
        m = build_model(p, s)
        from seqdet.sequence import initial_state
        rho0 = initial_state(p, s, True)
        a = evolve(m, rho0, IntegratorConfig(dt=5e-4, sample_times=(1.0, 2.0)))
        b = evolve(m, rho0, IntegratorConfig(dt=2.5e-4, sample_times=(2.0,)))
        for _, r in a:
            r.validate(herm_tol=1e-6, trace_tol=1e-6, eig_tol=1e-6)
        assert trace_distance(a[-1][1], b[-1][1]) < 1e-6

    def test_richardson_fourth_order(self):
        s = detector_space(4, with_source=False)
        p = SystemParams(delta1=0.3, delta2=-1.1, g=1.0, gamma12=0.2, kappa=0.0, gamma11=0.0)
        m = build_model(p, s)
        rho0 = basis_state(s, atom=1, resonator=2)
        finals = [evolve(m, rho0, IntegratorConfig(dt=dt, sample_times=(2.0,)))[-1][1].matrix for dt in (0.2, 0.1, 0.05)]
        e1 = np.abs(finals[0] - finals[1]).max()
        e2 = np.abs(finals[1] - finals[2]).max()
        assert 12 < e1 / e2 < 20

    def test_trace_drift_raises(self):
        s = detector_space(3, with_source=False)
        m = build_model(SystemParams(gamma01=1000.0), s)
        with pytest.raises(InvariantViolation):
            evolve(m, basis_state(s, atom=1), IntegratorConfig(dt=0.01, sample_times=(1.0,)))

    def test_integrator_config_validation(self):
        with pytest.raises(ValueError):
            IntegratorConfig(method="adaptive", tolerance=1e-2)
        with pytest.raises(ValueError):
            IntegratorConfig(dt=0.0)
        with pytest.raises(ValueError):
            IntegratorConfig(method="leapfrog")


class TestParams:
    def test_gamma22_tied(self):
        p = SystemParams(gamma11=0.01)
        assert p.gamma22 == pytest.approx(0.02)
        assert p.replace(gamma11=0.5).gamma22 == pytest.approx(1.0)

    def test_gamma22_override(self):
        with pytest.raises(ValueError):
            SystemParams(gamma11=0.01, gamma22=0.5)
        assert SystemParams(gamma11=0.01, gamma22=0.5, override_gamma22=True).gamma22 == 0.5

    @pytest.mark.parametrize("bad", [dict(kappa=-1.0), dict(T_interact=0.0)])
    def test_invalid(self, bad):
        with pytest.raises(ValueError):
            SystemParams(**bad)

    def test_probe_step_bound(self):
        from seqdet.params import ProbeParams
        with pytest.raises(ValueError):
            ProbeParams(T_probe=5.0, dt=0.01)
        assert ProbeParams().n_steps == 50_000

    def test_si_helpers(self):
        from seqdet.params import dephasing_rate_from_tphi, resonator_rate_from_t1
        assert dephasing_rate_from_tphi(10e-6) == pytest.approx(3.18e-3, rel=1e-2)
        assert resonator_rate_from_t1(500e-6) == pytest.approx(3.18e-5, rel=1e-2)
