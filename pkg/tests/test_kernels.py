import numpy as np
import pytest

from seqdet import _kernels_py, kernels
from seqdet.params import ProbeParams, readout_params
from seqdet.probe import ProbeStage
from seqdet.sequence import apply_unconditional_displacement, run_interaction

compiled = pytest.mark.skipif("compiled" not in kernels.available_backends(), reason="extension not built")
N = 10


@pytest.fixture(scope="module")
def setup():
    p = readout_params(alpha=1.0, probe=ProbeParams(T_probe=5.0, dt=0.005))
    s = apply_unconditional_displacement(run_interaction(p, "full", N), p.alpha)
    return p, s.rho_joint_1


class TestSelection:
    def test_python_always_available(self):
        name, fn = kernels.get_backend("python")
        assert name == "python" and fn is _kernels_py.run_chunk

    def test_unknown_backend(self):
        with pytest.raises(ValueError):
            kernels.get_backend("fortran")

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("SEQDET_BACKEND", "python")
        assert kernels.get_backend()[0] == "python"

    @compiled
    def test_default_prefers_compiled(self, monkeypatch):
        monkeypatch.delenv("SEQDET_BACKEND", raising=False)
        assert kernels.get_backend(block_size=9)[0] == "compiled"

    @compiled
    def test_block_size_dispatch(self, monkeypatch):
        monkeypatch.delenv("SEQDET_BACKEND", raising=False)
        assert kernels.get_backend(block_size=10)[0] == "python"
        with pytest.raises(ValueError):
            kernels.get_backend("compiled", block_size=10)


@compiled
class TestAgreement:
    @pytest.mark.parametrize("scheme", ["kraus", "euler"])
    @pytest.mark.parametrize("n_traj", [3, 8, 11])
    def test_backends_agree(self, setup, scheme, n_traj):
        p, rho = setup
        out = {}
        for name in ("python", "compiled"):
            st = ProbeStage(p, N, scheme=scheme, backend=name)
            h = np.linspace(0.0, 1.0, st.n_steps)
            out[name] = st.run_batch(st.real_blocks(rho), h, 1, range(n_traj), 4, record_every=10, keep_final=True)
        (Sp, fp, mp, rp), (Sc, fc, mc, rc) = out["python"], out["compiled"]
        np.testing.assert_allclose(Sc, Sp, rtol=0, atol=1e-10)
        np.testing.assert_allclose(fc, fp, rtol=0, atol=1e-12)
        np.testing.assert_allclose(rc, rp, rtol=0, atol=1e-10)
        if scheme == "euler":
            np.testing.assert_allclose(mc, mp, rtol=0, atol=1e-12)

    def test_rejects_other_block_sizes(self):
        from seqdet import _sme_kernel
        B = 10
        z = np.zeros((B, B))
        with pytest.raises(ValueError):
            _sme_kernel.run_chunk(z, z, z, np.zeros((2, B, B)), np.zeros((2, B, B)), np.zeros(B), np.zeros(B),
                                  np.zeros((2, B)), np.zeros(4), np.zeros((1, 4)), 0.01, 0, 0, False, 0)
