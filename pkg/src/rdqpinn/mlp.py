"""Small tanh MLP with exact input jets and parameter VJPs.

``forward_jet`` propagates, alongside每 activation value, the full Jacobian
and Hessian with respect to the network inputs. That yields exact first and
second input derivatives of the outputs — required because the PDE residuals
contain Laplacians of the model output (tanh is C-infinity; piecewise-linear
activations would make the Hessians vanish a.e.).

``vjp_jet`` runs reverse mode *through the jet computation*: given cotangent
seeds on the output values, output Jacobians, and output Hessians, it returns
the gradient with respect to all weights and biases in one pass. Seeding the
Jacobian/Hessian components is what produces mixed derivatives such as
d2(output)/d(param)d(input) without ever materializing those tensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError


def xavier_init(widths: list[int], rng: np.random.Generator
                ) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Uniform +-sqrt(6/(fan_in+fan_out)) weights, zero biases."""
    weights, biases = [], []
    for fan_in, fan_out in zip(widths[:-1], widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return weights, biases


@dataclass
class Mlp:
    """Feedforward net, tanh on hidden layers, identity on the output layer."""

    widths: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @classmethod
    def create(cls, widths, rng: np.random.Generator) -> "Mlp":
        widths = [int(w) for w in widths]
        if len(widths) < 2 or min(widths) < 1:
            raise ConfigurationError(f"bad layer widths: {widths}")
        w, b = xavier_init(widths, rng)
        return cls(widths, w, b)

    @property
    def d_in(self) -> int:
        return self.widths[0]

    @property
    def d_out(self) -> int:
        return self.widths[-1]

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    # --- flat parameter vector ---------------------------------------------

    @property
    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def get_params(self) -> np.ndarray:
        return np.concatenate(
            [np.concatenate([w.ravel(), b]) for w, b in zip(self.weights, self.biases)]
        )

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ConfigurationError(
                f"parameter vector length {flat.size} != {self.n_params}"
            )
        pos = 0
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            self.weights[i] = flat[pos:pos + w.size].reshape(w.shape).copy()
            pos += w.size
            self.biases[i] = flat[pos:pos + b.size].copy()
            pos += b.size

    # --- evaluation ----------------------------------------------------------

    def forward(self, z: np.ndarray) -> np.ndarray:
        """Values only; z has shape (P, d_in)."""
        h = np.asarray(z, dtype=np.float64)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            h = h @ w.T + b
            if i < self.n_layers - 1:
                h = np.tanh(h)
        return h

    def forward_jet(self, z: np.ndarray, want_cache: bool = False):
        """Values, input Jacobians, and input Hessians of all outputs.

        Returns (v, J, H) with v: (P, d_out), J: (P, d_out, d_in),
        H: (P, d_out, d_in, d_in); plus the forward cache when requested.
        """
        z = np.asarray(z, dtype=np.float64)
        p, d = z.shape
        if d != self.d_in:
            raise ConfigurationError(f"input width {d} != {self.d_in}")
        v = z
        jac = np.broadcast_to(np.eye(d), (p, d, d)).copy()
        hes = np.zeros((p, d, d, d))
        cache = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            u = v @ w.T + b
            ju = np.einsum("oi,pid->pod", w, jac)
            hu = np.einsum("oi,pide->pode", w, hes)
            layer = {"v_in": v, "j_in": jac, "h_in": hes, "ju": ju, "hu": hu}
            if i < self.n_layers - 1:
                a = np.tanh(u)
                a1 = 1.0 - a * a
                a2 = -2.0 * a * a1
                v = a
                jac = a1[:, :, None] * ju
                hes = (a2[:, :, None, None] * ju[:, :, :, None] * ju[:, :, None, :]
                       + a1[:, :, None, None] * hu)
                layer.update(a=a, a1=a1, a2=a2)
            else:
                v, jac, hes = u, ju, hu
            cache.append(layer)
        if want_cache:
            return v, jac, hes, cache
        return v, jac, hes

    def vjp_jet(self, cache, s_val: np.ndarray, s_jac: np.ndarray | None,
                s_hes: np.ndarray | None) -> np.ndarray:
        """Parameter gradient of sum_p [s_val.v + s_jac.J + s_hes.H].

        Seeds may be None (treated as zero). The result is the flat-parameter
        gradient; summation over the point axis is part of the contraction.
        """
        p = s_val.shape[0]
        d = self.d_in
        v_bar = s_val.astype(np.float64, copy=True)
        j_bar = (np.zeros((p, self.d_out, d)) if s_jac is None
                 else s_jac.astype(np.float64, copy=True))
        h_bar = (np.zeros((p, self.d_out, d, d)) if s_hes is None
                 else s_hes.astype(np.float64, copy=True))
        grads_w = [None] * self.n_layers
        grads_b = [None] * self.n_layers
        for i in range(self.n_layers - 1, -1, -1):
            layer = cache[i]
            if i < self.n_layers - 1:
                a, a1, a2 = layer["a"], layer["a1"], layer["a2"]
                ju, hu = layer["ju"], layer["hu"]
                a3 = -2.0 * (a1 * a1 + a * a2)
                u_bar = (v_bar * a1
                         + a2 * np.einsum("pwd,pwd->pw", j_bar, ju)
                         + a3 * np.einsum("pwde,pwd,pwe->pw", h_bar, ju, ju)
                         + a2 * np.einsum("pwde,pwde->pw", h_bar, hu))
                h_sym = h_bar + np.swapaxes(h_bar, -1, -2)
                ju_bar = (j_bar * a1[:, :, None]
                          + a2[:, :, None] * np.einsum("pwge,pwe->pwg", h_sym, ju))
                hu_bar = h_bar * a1[:, :, None, None]
            else:
                u_bar, ju_bar, hu_bar = v_bar, j_bar, h_bar
            w = self.weights[i]
            v_in, j_in, h_in = layer["v_in"], layer["j_in"], layer["h_in"]
            grads_w[i] = (np.einsum("po,pi->oi", u_bar, v_in)
                          + np.einsum("pod,pid->oi", ju_bar, j_in)
                          + np.einsum("pode,pide->oi", hu_bar, h_in))
            grads_b[i] = u_bar.sum(axis=0)
            if i > 0:
                v_bar = u_bar @ w
                j_bar = np.einsum("pod,oi->pid", ju_bar, w)
                h_bar = np.einsum("pode,oi->pide", hu_bar, w)
        return np.concatenate(
            [np.concatenate([gw.ravel(), gb]) for gw, gb in zip(grads_w, grads_b)]
        )
