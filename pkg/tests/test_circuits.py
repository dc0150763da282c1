"""Encoding circuit, ansatz, and model readout."""

import numpy as np
import pytest

from conftest import make_fnn_spec, make_model
from rdqpinn import ConfigurationError, circuits, zero_state
from rdqpinn.circuits import AnsatzSpec, ModelSpec, default_partition
from rdqpinn import embedding as emb

SQ2 = np.sqrt(0.5)

# Independent oracle: compose the full unitary from kron products.
RX = lambda t: np.array([[np.cos(t / 2), -1j * np.sin(t / 2)],
                         [-1j * np.sin(t / 2), np.cos(t / 2)]])
RY = lambda t: np.array([[np.cos(t / 2), -np.sin(t / 2)],
                         [np.sin(t / 2), np.cos(t / 2)]])
RZ = lambda t: np.diag([np.exp(-1j * t / 2), np.exp(1j * t / 2)])


def kron_on(mat, qubit, n):
    """Lift a 1-qubit matrix to n qubits (qubit 0 = LSB of the basis index)."""
    out = np.eye(1)
    for q in range(n - 1, -1, -1):
        out = np.kron(out, mat if q == qubit else np.eye(2))
    return out


def cnot_matrix(control, target, n):
    dim = 2**n
    out = np.zeros((dim, dim))
    for b in range(dim):
        if (b >> control) & 1:
            out[b ^ (1 << target), b] = 1.0
        else:
            out[b, b] = 1.0
    return out


class TestEncoding:
    def test_zero_angles_identity(self):
        s = circuits.apply_encoding(zero_state(3), [0.0, 0.0, 0.0])
        np.testing.assert_allclose(s.amplitudes, zero_state(3).amplitudes)

    def test_full_flip(self):
        s = circuits.apply_encoding(zero_state(1), [np.pi])
        from rdqpinn import expectation_zsum
        assert expectation_zsum(s, [0]) == pytest.approx(-1.0)

    def test_equatorial(self):
        from rdqpinn import expectation_zsum
        s = circuits.apply_encoding(zero_state(2), [np.pi / 2, np.pi / 2])
        assert expectation_zsum(s, [0]) == pytest.approx(0.0, abs=1e-15)
        assert expectation_zsum(s, [1]) == pytest.approx(0.0, abs=1e-15)

    def test_arity_mismatch(self):
        with pytest.raises(ConfigurationError):
            circuits.apply_encoding(zero_state(2), [0.1])


class TestAnsatz:
    def test_zero_params_on_zero_state(self):
        spec = AnsatzSpec(2, 1)
        s = circuits.apply_ansatz(zero_state(2), spec, np.zeros(6))
        np.testing.assert_allclose(s.amplitudes, [1, 0, 0, 0], atol=1e-15)

    def test_zero_params_entangler_only(self):
        spec = AnsatzSpec(2, 1)
        start = zero_state(2)
        start.amplitudes = np.array([SQ2, SQ2, 0, 0], dtype=complex)  # qubit0 super
        s = circuits.apply_ansatz(start, spec, np.zeros(6))
        np.testing.assert_allclose(s.amplitudes, [SQ2, 0, 0, SQ2], atol=1e-15)

    def test_random_params_unitary(self, rng):
        spec = AnsatzSpec(3, 2)
        theta = rng.uniform(-np.pi, np.pi, spec.n_params)
        s = circuits.apply_ansatz(zero_state(3), spec, theta)
        assert abs(np.linalg.norm(s.amplitudes) - 1.0) < 1e-12

    def test_param_count_law(self):
        for n, layers in [(2, 1), (3, 4), (6, 3)]:
            assert AnsatzSpec(n, layers).n_params == 3 * n * layers

    def test_length_mismatch(self):
        with pytest.raises(ConfigurationError):
            circuits.apply_ansatz(zero_state(2), AnsatzSpec(2, 1), np.zeros(5))

    def test_matches_kron_oracle(self, rng):
        """Layer order: RX, RY, RZ per qubit, then the CNOT chain."""
        spec = AnsatzSpec(2, 1)
        theta = rng.uniform(-np.pi, np.pi, 6)
        s = circuits.apply_ansatz(zero_state(2), spec, theta)
        u = np.eye(4, dtype=complex)
        for q in range(2):
            for mat, t in zip((RX, RY, RZ), theta[3 * q:3 * q + 3]):
                u = kron_on(mat(t), q, 2) @ u
        u = cnot_matrix(0, 1, 2) @ u
        np.testing.assert_allclose(s.amplitudes, u[:, 0], atol=1e-12)


class TestModelOutput:
    def test_all_zero_angles(self, rng):
        model = make_model("fnn", rng=rng, param_scale=None)
        model.embedding.fnn.mlp.set_params(
            np.zeros(model.embedding.fnn.n_params))
        model.theta_var[:] = 0.0
        c_a, c_s = circuits.model_output(model, [0.3, 0.5])
        assert c_a == pytest.approx(1.0)
        assert c_s == pytest.approx(1.0)

    def test_all_pi_angles(self, rng):
        # empty variational circuit: with layers present the CNOT chain would
        # flip qubit 1 off the |11> state even at zero rotation angles
        model = make_model("fnn", n_layers=0, rng=rng, param_scale=None,
                           gating=("none", "none"))
        fnn = model.embedding.fnn
        fnn.mlp.set_params(np.zeros(fnn.n_params))
        fnn.mlp.biases[-1][:] = np.pi
        c_a, c_s = circuits.model_output(model, [0.3, 0.5])
        assert c_a == pytest.approx(-1.0)
        assert c_s == pytest.approx(-1.0)

    def test_two_qubit_split_readout_vs_kron_oracle(self):
        """Encoding (pi/2, 0), empty ansatz: c_A = 0, c_S = 1."""
        psi = kron_on(RY(np.pi / 2), 0, 2) @ np.array([1, 0, 0, 0], complex)
        z0 = np.array([1, -1, 1, -1])   # Z on qubit 0 over basis index bits
        z1 = np.array([1, 1, -1, -1])
        oracle_a = float(np.real(np.conj(psi) @ (z0 * psi)))
        oracle_s = float(np.real(np.conj(psi) @ (z1 * psi)))
        assert oracle_a == pytest.approx(0.0, abs=1e-15)
        assert oracle_s == pytest.approx(1.0)

        rng = np.random.default_rng(0)
        spec = make_fnn_spec(2, 1, rng, hidden_layers=0, neurons=1,
                             gating=("none", "none"), param_scale=None)
        fnn = spec.fnn
        fnn.mlp.weights[0][:] = 0.0
        fnn.mlp.biases[0][:] = [np.pi / 2, 0.0]
        model = ModelSpec(AnsatzSpec(2, 0), np.zeros(0), spec,
                          default_partition(2))
        c_a, c_s = circuits.model_output(model, [0.1, 0.2])
        assert c_a == pytest.approx(oracle_a, abs=1e-14)
        assert c_s == pytest.approx(oracle_s, abs=1e-14)

    def test_raw_readout_bounded(self, rng):
        for variant in ("fnn", "qnn"):
            model = make_model(variant, n_qubits=3, n_layers=2, rng=rng)
            pts = np.column_stack([rng.uniform(-1, 1, 40),
                                   rng.uniform(0, 1, 40)])
            c_a, c_s = model.predict(pts)
            assert np.all(np.abs(c_a) <= 1 + 1e-12)
            assert np.all(np.abs(c_s) <= 1 + 1e-12)

    def test_parameter_sharing_across_coords(self, rng):
        """Outputs differ only through the encoding angles: two models with
        different embeddings agree whenever their angles coincide."""
        m1 = make_model("fnn", n_qubits=2, n_layers=2, rng=rng)
        m2 = make_model("qnn", n_qubits=2, n_layers=2,
                        rng=np.random.default_rng(9))
        m2.theta_var = m1.theta_var.copy()
        pt1 = np.array([[0.2, 0.7]])
        pt2 = np.array([[-0.5, 0.3]])
        a1 = m1.embedding.embed(pt1)
        # force m2's embedding to produce m1's angles at a different point
        class Frozen:
            n_angles = 2
            n_params = 0
            def embed(self, pts):
                return np.repeat(a1, len(pts), axis=0)
            def get_params(self):
                return np.zeros(0)
            def set_params(self, flat):
                pass
        m2.embedding = Frozen()
        np.testing.assert_allclose(m1.predict(pt1), m2.predict(pt2), atol=1e-14)

    def test_embedding_arity_checked(self, rng):
        spec = make_fnn_spec(3, 1, rng)
        with pytest.raises(ConfigurationError):
            ModelSpec(AnsatzSpec(2, 1), np.zeros(6), spec, default_partition(2))


class TestDefaultPartition:
    def test_even_split(self):
        p = default_partition(4)
        assert p.q_a == (0, 1) and p.q_s == (2, 3)

    def test_odd_extra_to_a(self):
        p = default_partition(5)
        assert p.q_a == (0, 1, 2) and p.q_s == (3, 4)
