"""Shared builders for hybrid models and collocation sets."""

import numpy as np
import pytest

from rdqpinn import circuits, embedding as emb, physics


def make_normalization(dim=1, t_max=1.0):
    bounds = [(-1.0, 1.0)] * dim + [(0.0, t_max)]
    return emb.NormalizationSpec(tuple(bounds))


def make_fnn_spec(n_qubits, dim, rng, hidden_layers=1, neurons=4,
                  gating=None, param_scale=0.5):
    norm = make_normalization(dim)
    fnn = emb.FnnEmbedding.create(n_qubits, dim + 1, hidden_layers, neurons, rng)
    if param_scale is not None:
        fnn.mlp.set_params(rng.uniform(-param_scale, param_scale, fnn.n_params))
    gating = gating if gating is not None else emb.default_gating(n_qubits)
    return emb.EmbeddingSpec("fnn", norm, fnn=fnn, gating=gating)


def make_qnn_spec(n_qubits, dim, rng, emb_layers=1, gating=None,
                  param_scale=0.5):
    norm = make_normalization(dim)
    qnn = emb.QnnEmbedding.create(n_qubits, dim + 1, emb_layers, rng)
    if param_scale is not None:
        qnn.set_params(rng.uniform(-param_scale, param_scale, qnn.n_params))
    gating = gating if gating is not None else emb.default_gating(n_qubits)
    return emb.EmbeddingSpec("qnn", norm, qnn=qnn, gating=gating)


def make_model(variant, n_qubits=2, n_layers=1, dim=1, rng=None,
               scale=(1.0, 1.0), offset=(0.0, 0.0), **emb_kwargs):
    rng = rng if rng is not None else np.random.default_rng(0)
    if variant == "fnn":
        spec = make_fnn_spec(n_qubits, dim, rng, **emb_kwargs)
    else:
        spec = make_qnn_spec(n_qubits, dim, rng, **emb_kwargs)
    ansatz = circuits.AnsatzSpec(n_qubits, n_layers)
    theta = rng.uniform(-0.5, 0.5, ansatz.n_params)
    return circuits.ModelSpec(ansatz, theta, spec,
                              circuits.default_partition(n_qubits),
                              output_scale=scale, output_offset=offset)


def small_collocation(dim=1, seed=0, interior=(3, 2), boundary=2, initial=3):
    bounds = [(-1.0, 1.0)] * dim
    return physics.sample_collocation(
        bounds, 1.0,
        {"interior": interior, "boundary": boundary, "initial": initial},
        seed=seed, mode="grid")


def identity_x_model(n_layers=0):
    """2-qubit model whose species-A readout is exactly cos(x).

    Qubit 0 carries alpha_0 = x via a single linear layer; qubit 1 stays at
    angle zero, so c_A = cos(x) and c_S = 1 identically.
    """
    rng = np.random.default_rng(0)
    norm = make_normalization(1)
    fnn = emb.FnnEmbedding.create(2, 2, hidden_layers=0, neurons=1, rng=rng)
    fnn.mlp.weights[0][:] = 0.0
    fnn.mlp.weights[0][0, 0] = 1.0
    fnn.mlp.biases[0][:] = 0.0
    spec = emb.EmbeddingSpec("fnn", norm, fnn=fnn, gating=("none", "none"))
    ansatz = circuits.AnsatzSpec(2, n_layers)
    return circuits.ModelSpec(ansatz, np.zeros(ansatz.n_params), spec,
                              circuits.default_partition(2))


class FieldStubModel:
    """Analytic stand-in exposing the model evaluation protocol.

    ``fns`` maps the pde_terms keys to callables over (P, C) points; predict
    uses the c_a/c_s entries.
    """

    def __init__(self, fns):
        self.fns = fns

    def predict(self, points):
        points = np.atleast_2d(points)
        return self.fns["c_a"](points), self.fns["c_s"](points)

    def pde_terms(self, points):
        points = np.atleast_2d(points)
        return {k: f(points) for k, f in self.fns.items()}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
