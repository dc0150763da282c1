"""Trainable embeddings: normalized coordinates -> encoding angles.

Two variants share one interface. The classical variant (FNN) runs a small
tanh network on the normalized coordinates; the quantum variant (QNN) encodes
the normalized coordinates as RY rotations on a secondary circuit, runs its
own variational layers, and maps the per-qubit <Z> readouts to angles via
alpha_j = (pi/2) * <Z_j>.

Coordinate layout everywhere: points are (P, C) arrays in original units with
spatial coordinates first and time last, i.e. (x, t) in 1D and (x, y, t) in
2D. Derivatives returned by this module are with respect to the original
coordinates: the affine normalization chain rule (factor 2/(max-min) per
derivative order) and the coordinate-gating product rule are already folded
in.

Per-output gating multiplies angle j by the normalized coordinate named in
``gating[j]`` ("none", "x", or "t"). Gating is applied after the variant's
base map, so both variants share the product-rule handling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import circuits, shifts
from .errors import ConfigurationError
from .mlp import Mlp

GATE_CHOICES = ("none", "x", "t")


def normalize(value: float, bounds: tuple[float, float]) -> float:
    """Affine map of ``bounds`` onto [-1, 1]; values outside map affinely."""
    lo, hi = bounds
    if not lo < hi:
        raise ConfigurationError(f"degenerate bounds ({lo}, {hi})")
    return 2.0 * (value - lo) / (hi - lo) - 1.0


@dataclass(frozen=True)
class NormalizationSpec:
    """Per-coordinate (min, max) bounds, spatial coordinates first, time last."""

    bounds: tuple[tuple[float, float], ...]

    def __post_init__(self):
        for lo, hi in self.bounds:
            if not lo < hi:
                raise ConfigurationError(f"degenerate bounds ({lo}, {hi})")

    @property
    def n_coords(self) -> int:
        return len(self.bounds)

    def scales(self) -> np.ndarray:
        """d(normalized)/d(original) per coordinate."""
        return np.array([2.0 / (hi - lo) for lo, hi in self.bounds])

    def to_normalized(self, points: np.ndarray) -> np.ndarray:
        points = np.asarray(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] != self.n_coords:
            raise ConfigurationError(
                f"points must have shape (P, {self.n_coords}), got {points.shape}"
            )
        lo = np.array([b[0] for b in self.bounds])
        hi = np.array([b[1] for b in self.bounds])
        return 2.0 * (points - lo) / (hi - lo) - 1.0


@dataclass
class AngleJet:
    """Angles with exact first/second derivatives w.r.t. original coords.

    ``d2`` holds the per-coordinate diagonal second derivatives; ``d2_full``
    (present when requested) additionally carries the cross terms.
    """

    alpha: np.ndarray            # (P, n_angles)
    d1: np.ndarray               # (P, n_angles, C)
    d2: np.ndarray               # (P, n_angles, C)
    d2_full: np.ndarray | None = None  # (P, n_angles, C, C)


@dataclass
class FnnEmbedding:
    """Classical feature map: tanh MLP from normalized coords to angles."""

    mlp: Mlp

    @classmethod
    def create(cls, n_angles: int, n_coords: int, hidden_layers: int,
               neurons: int, rng: np.random.Generator) -> "FnnEmbedding":
        widths = [n_coords] + [neurons] * hidden_layers + [n_angles]
        return cls(Mlp.create(widths, rng))

    @property
    def n_angles(self) -> int:
        return self.mlp.d_out

    @property
    def n_params(self) -> int:
        return self.mlp.n_params

    def get_params(self) -> np.ndarray:
        return self.mlp.get_params()

    def set_params(self, flat: np.ndarray) -> None:
        self.mlp.set_params(flat)


@dataclass
class QnnEmbedding:
    """Quantum feature map: encode coords, run layers, read alpha = (pi/2)<Z>.

    Qubit m encodes pi * z_c where c cycles over the normalized coordinates by
    qubit index (x/t alternating in 1D, x/y/t in 2D). Readout magnitudes never
    exceed pi/2 because |<Z>| <= 1.
    """

    n_qubits: int
    n_layers: int
    theta: np.ndarray
    n_coords: int
    input_scale: float = np.pi
    angle_scale: float = np.pi / 2.0

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        if self.theta.shape != (3 * self.n_qubits * self.n_layers,):
            raise ConfigurationError(
                f"theta length {self.theta.size} != 3*{self.n_qubits}*{self.n_layers}"
            )
        if self.n_coords not in (2, 3):
            raise ConfigurationError("embedding supports 1D+time or 2D+time")

    @classmethod
    def create(cls, n_angles: int, n_coords: int, n_layers: int,
               rng: np.random.Generator) -> "QnnEmbedding":
        theta = rng.uniform(-0.1, 0.1, size=3 * n_angles * n_layers)
        return cls(n_angles, n_layers, theta, n_coords)

    @property
    def ansatz(self) -> circuits.AnsatzSpec:
        return circuits.AnsatzSpec(self.n_qubits, self.n_layers)

    @property
    def n_angles(self) -> int:
        return self.n_qubits

    @property
    def n_params(self) -> int:
        return self.theta.size

    def get_params(self) -> np.ndarray:
        return self.theta.copy()

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != self.theta.shape:
            raise ConfigurationError("theta length mismatch")
        self.theta = flat.copy()

    def coord_matrix(self) -> np.ndarray:
        """K[m, c] = d(encoding angle of qubit m)/d(normalized coord c)."""
        k = np.zeros((self.n_qubits, self.n_coords))
        for m in range(self.n_qubits):
            k[m, m % self.n_coords] = self.input_scale
        return k

    def input_angles(self, z: np.ndarray) -> np.ndarray:
        return z @ self.coord_matrix().T


def match_layer_count(n_var_params: int, n_qubits: int) -> int:
    """Layer count whose 3*n_qubits*L is closest to n_var_params (ties down)."""
    x = n_var_params / (3 * n_qubits)
    lo = int(np.floor(x))
    hi = lo + 1
    if lo >= 1 and (x - lo) <= (hi - x):
        return lo
    return max(1, hi)


def default_gating(n_angles: int) -> tuple[str, ...]:
    return tuple("x" if j % 2 == 0 else "t" for j in range(n_angles))


@dataclass
class EmbeddingSpec:
    """Active variant plus normalization and per-angle coordinate gating."""

    variant: str
    normalization: NormalizationSpec
    fnn: FnnEmbedding | None = None
    qnn: QnnEmbedding | None = None
    gating: tuple[str, ...] = ()

    def __post_init__(self):
        if self.variant not in ("fnn", "qnn"):
            raise ConfigurationError(f"unknown embedding variant {self.variant!r}")
        active = self.fnn if self.variant == "fnn" else self.qnn
        if active is None:
            raise ConfigurationError(f"{self.variant} embedding record missing")
        if self.variant == "fnn" and self.qnn is not None:
            raise ConfigurationError("exactly one embedding variant may be set")
        if self.variant == "qnn" and self.fnn is not None:
            raise ConfigurationError("exactly one embedding variant may be set")
        if not self.gating:
            self.gating = ("none",) * active.n_angles
        if len(self.gating) != active.n_angles:
            raise ConfigurationError("one gating selector per output angle")
        for g in self.gating:
            if g not in GATE_CHOICES:
                raise ConfigurationError(f"unknown gating selector {g!r}")

    @property
    def active(self):
        return self.fnn if self.variant == "fnn" else self.qnn

    @property
    def n_angles(self) -> int:
        return self.active.n_angles

    @property
    def n_params(self) -> int:
        return self.active.n_params

    def get_params(self) -> np.ndarray:
        return self.active.get_params()

    def set_params(self, flat: np.ndarray) -> None:
        self.active.set_params(flat)

    def gate_indices(self) -> np.ndarray:
        """Normalized-coordinate index each angle is gated by (-1 = none)."""
        c = self.normalization.n_coords
        idx = {"none": -1, "x": 0, "t": c - 1}
        return np.array([idx[g] for g in self.gating], dtype=np.int64)

    def embed(self, points: np.ndarray) -> np.ndarray:
        """Angle values only, (P, n_angles)."""
        z = self.normalization.to_normalized(points)
        if self.variant == "fnn":
            base = self.fnn.mlp.forward(z)
        else:
            qnn = self.qnn
            slots = np.concatenate(
                [qnn.input_angles(z),
                 np.broadcast_to(qnn.theta, (len(z), qnn.theta.size))], axis=1)
            base = qnn.angle_scale * circuits.run_slots(qnn.ansatz, slots)
        return _gate_values(self, z, base)

    def jet_workspace(self, points: np.ndarray, need_mixed: bool = False,
                      counter=None) -> "JetWorkspace":
        if self.variant == "fnn":
            return _FnnJetWorkspace(self, points, need_mixed)
        return _QnnJetWorkspace(self, points, need_mixed, counter)

    def value_workspace(self, points: np.ndarray, counter=None) -> "ValueWorkspace":
        if self.variant == "fnn":
            return _FnnValueWorkspace(self, points)
        return _QnnValueWorkspace(self, points, counter)


# ---------------------------------------------------------------------------
# Gating and normalization chain helpers
# ---------------------------------------------------------------------------


def _gate_values(spec: EmbeddingSpec, z: np.ndarray, base: np.ndarray) -> np.ndarray:
    gidx = spec.gate_indices()
    g = np.ones_like(base)
    for j, gi in enumerate(gidx):
        if gi >= 0:
            g[:, j] = z[:, gi]
    return g * base


def _gated_jet(spec: EmbeddingSpec, z: np.ndarray, a: np.ndarray,
               ja: np.ndarray, ha: np.ndarray, cross: bool) -> AngleJet:
    """Apply gating product rule (normalized coords), then rescale to original."""
    p, nq = a.shape
    c = z.shape[1]
    gidx = spec.gate_indices()
    g = np.ones((p, nq))
    for j, gi in enumerate(gidx):
        if gi >= 0:
            g[:, j] = z[:, gi]
    alpha = g * a
    d1n = g[:, :, None] * ja
    d2n = g[:, :, None, None] * ha
    for j, gi in enumerate(gidx):
        if gi >= 0:
            d1n[:, j, gi] += a[:, j]
            d2n[:, j, gi, :] += ja[:, j, :]
            d2n[:, j, :, gi] += ja[:, j, :]
    r = spec.normalization.scales()
    d1 = d1n * r[None, None, :]
    d2f = d2n * r[None, None, :, None] * r[None, None, None, :]
    diag = np.einsum("pjcc->pjc", d2f).copy()
    return AngleJet(alpha, d1, diag, d2_full=d2f if cross else None)


def _pullback_seeds(spec: EmbeddingSpec, z: np.ndarray, s0, s1, s2):
    """Convert original-coord seeds on (alpha, d2alpha/dth/dc, d3alpha/dth/dc2)
    into seeds on the ungated base jets in normalized coordinates."""
    p, nq = s0.shape
    c = spec.normalization.n_coords
    r = spec.normalization.scales()
    s1n = np.zeros((p, nq, c)) if s1 is None else s1 * r[None, None, :]
    s2n = np.zeros((p, nq, c)) if s2 is None else s2 * (r**2)[None, None, :]
    gidx = spec.gate_indices()
    g = np.ones((p, nq))
    for j, gi in enumerate(gidx):
        if gi >= 0:
            g[:, j] = z[:, gi]
    b0 = s0 * g
    b1 = s1n * g[:, :, None]
    b2 = s2n * g[:, :, None]
    for j, gi in enumerate(gidx):
        if gi >= 0:
            b0[:, j] += s1n[:, j, gi]
            b1[:, j, gi] += 2.0 * s2n[:, j, gi]
    return b0, b1, b2


# ---------------------------------------------------------------------------
# Workspaces: cache one forward evaluation, answer jet + seeded-gradient asks
# ---------------------------------------------------------------------------


class JetWorkspace:
    """Jet plus a seeded parameter-gradient contraction over the same points."""

    jet: AngleJet

    def param_grad(self, s0, s1=None, s2=None) -> np.ndarray:
        raise NotImplementedError


class ValueWorkspace:
    alpha: np.ndarray

    def param_grad(self, s0) -> np.ndarray:
        raise NotImplementedError


class _FnnJetWorkspace(JetWorkspace):
    def __init__(self, spec: EmbeddingSpec, points: np.ndarray, need_mixed: bool):
        self.spec = spec
        self.z = spec.normalization.to_normalized(points)
        a, ja, ha, self.cache = spec.fnn.mlp.forward_jet(self.z, want_cache=True)
        self.base = (a, ja, ha)
        self.jet = _gated_jet(spec, self.z, a, ja, ha, cross=True)

    def param_grad(self, s0, s1=None, s2=None) -> np.ndarray:
        b0, b1, b2 = _pullback_seeds(self.spec, self.z, s0, s1, s2)
        c = self.z.shape[1]
        s_hes = np.zeros(b1.shape + (c,))
        for ci in range(c):
            s_hes[:, :, ci, ci] = b2[:, :, ci]
        return self.spec.fnn.mlp.vjp_jet(self.cache, b0, b1, s_hes)


class _FnnValueWorkspace(ValueWorkspace):
    def __init__(self, spec: EmbeddingSpec, points: np.ndarray):
        self.spec = spec
        self.z = spec.normalization.to_normalized(points)
        a, ja, ha, self.cache = spec.fnn.mlp.forward_jet(self.z, want_cache=True)
        self.alpha = _gate_values(spec, self.z, a)

    def param_grad(self, s0) -> np.ndarray:
        b0, _, _ = _pullback_seeds(self.spec, self.z, s0, None, None)
        return self.spec.fnn.mlp.vjp_jet(self.cache, b0, None, None)


class _QnnJetWorkspace(JetWorkspace):
    def __init__(self, spec: EmbeddingSpec, points: np.ndarray, need_mixed: bool,
                 counter=None):
        self.spec = spec
        qnn = spec.qnn
        self.z = spec.normalization.to_normalized(points)
        self.k = qnn.coord_matrix()
        enc = tuple(range(qnn.n_qubits))
        par = tuple(range(qnn.n_qubits, qnn.n_qubits + qnn.n_params))
        mis = [()] + shifts.first_order(enc) + shifts.second_order(enc, enc)
        if need_mixed:
            mis += (shifts.first_order(par)
                    + shifts.second_order(par, enc)
                    + shifts.third_order(par, enc, enc))
        slots = np.concatenate(
            [qnn.input_angles(self.z),
             np.broadcast_to(qnn.theta, (len(self.z), qnn.n_params))], axis=1)
        ansatz = qnn.ansatz
        program = circuits.build_program(ansatz)
        tables, n_evals = shifts.derivative_tables(
            lambda s: circuits.run_slots(ansatz, s, program), slots, mis)
        if counter is not None:
            counter.add(n_evals)
        self.tables = tables
        self.enc, self.par = enc, par
        q = qnn.angle_scale
        p, nq = len(self.z), qnn.n_qubits
        a = q * tables[()]
        d1g = np.empty((p, nq, nq))          # d a_j / d gamma_m
        for m in enc:
            d1g[:, :, m] = q * tables[(m,)]
        d2g = np.empty((p, nq, nq, nq))
        for m in enc:
            for n in enc:
                d2g[:, :, m, n] = q * tables[tuple(sorted((m, n)))]
        ja = np.einsum("pjm,mc->pjc", d1g, self.k)
        ha = np.einsum("pjmn,mc,ne->pjce", d2g, self.k, self.k)
        self.jet = _gated_jet(spec, self.z, a, ja, ha, cross=True)
        self.need_mixed = need_mixed

    def param_grad(self, s0, s1=None, s2=None) -> np.ndarray:
        spec, qnn = self.spec, self.spec.qnn
        b0, b1, b2 = _pullback_seeds(spec, self.z, s0, s1, s2)
        q = qnn.angle_scale
        t = self.tables
        p, nq = b0.shape
        npar = qnn.n_params
        grad = np.zeros(npar)
        e1 = np.empty((p, nq, npar))         # dZ_j/dtheta_p
        for i, sp in enumerate(self.par):
            e1[:, :, i] = t[(sp,)]
        grad += q * np.einsum("pj,pji->i", b0, e1)
        if s1 is None and s2 is None:
            return grad
        if not self.need_mixed:
            raise ConfigurationError("workspace built without mixed tables")
        # seeds contracted into gamma space: ks1[p,j,m], ks2[p,j,m,n]
        ks1 = np.einsum("pjc,mc->pjm", b1, self.k)
        ks2 = np.einsum("pjc,mc,nc->pjmn", b2, self.k, self.k)
        for i, sp in enumerate(self.par):
            m2 = np.empty((p, nq, qnn.n_qubits))
            for m in self.enc:
                m2[:, :, m] = t[tuple(sorted((sp, m)))]
            grad[i] += q * np.einsum("pjm,pjm->", ks1, m2)
            m3 = np.empty((p, nq, qnn.n_qubits, qnn.n_qubits))
            for m in self.enc:
                for n in self.enc:
                    m3[:, :, m, n] = t[tuple(sorted((sp, m, n)))]
            grad[i] += q * np.einsum("pjmn,pjmn->", ks2, m3)
        return grad


class _QnnValueWorkspace(ValueWorkspace):
    def __init__(self, spec: EmbeddingSpec, points: np.ndarray, counter=None):
        self.spec = spec
        qnn = spec.qnn
        self.z = spec.normalization.to_normalized(points)
        par = tuple(range(qnn.n_qubits, qnn.n_qubits + qnn.n_params))
        mis = [()] + shifts.first_order(par)
        slots = np.concatenate(
            [qnn.input_angles(self.z),
             np.broadcast_to(qnn.theta, (len(self.z), qnn.n_params))], axis=1)
        ansatz = qnn.ansatz
        program = circuits.build_program(ansatz)
        self.tables, n_evals = shifts.derivative_tables(
            lambda s: circuits.run_slots(ansatz, s, program), slots, mis)
        if counter is not None:
            counter.add(n_evals)
        self.par = par
        self.alpha = _gate_values(spec, self.z, qnn.angle_scale * self.tables[()])

    def param_grad(self, s0) -> np.ndarray:
        qnn = self.spec.qnn
        b0, _, _ = _pullback_seeds(self.spec, self.z, s0, None, None)
        p, nq = b0.shape
        e1 = np.empty((p, nq, qnn.n_params))
        for i, sp in enumerate(self.par):
            e1[:, :, i] = self.tables[(sp,)]
        return qnn.angle_scale * np.einsum("pj,pji->i", b0, e1)


# ---------------------------------------------------------------------------
# Spec-surface operations (single point or small batch, exact tensors)
# ---------------------------------------------------------------------------


def embed_with_jet(spec: EmbeddingSpec, points: np.ndarray,
                   cross: bool = False) -> AngleJet:
    """Angles plus exact first/second derivatives w.r.t. original coords."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    jet = spec.jet_workspace(points).jet
    if not cross:
        jet.d2_full = None
    return jet


def embedding_param_grad(spec: EmbeddingSpec, coords) -> np.ndarray:
    """d alpha_j / d theta_emb at one point: (n_angles, n_params)."""
    pts = np.asarray(coords, dtype=np.float64).reshape(1, -1)
    ws = spec.value_workspace(pts)
    nq = spec.n_angles
    out = np.empty((nq, spec.n_params))
    for j in range(nq):
        seed = np.zeros((1, nq))
        seed[0, j] = 1.0
        out[j] = ws.param_grad(seed)
    return out


def mixed_param_input_grad(spec: EmbeddingSpec, coords
                           ) -> tuple[np.ndarray, np.ndarray]:
    """Mixed tensors d2(alpha)/d(theta)d(coord) and d3(alpha)/d(theta)d(coord)2.

    Shapes (n_angles, n_params, C); derivatives are w.r.t. original coords.
    """
    pts = np.asarray(coords, dtype=np.float64).reshape(1, -1)
    ws = spec.jet_workspace(pts, need_mixed=True)
    nq, c = spec.n_angles, spec.normalization.n_coords
    m2 = np.empty((nq, spec.n_params, c))
    m3 = np.empty((nq, spec.n_params, c))
    zero = np.zeros((1, nq))
    for j in range(nq):
        for ci in range(c):
            s1 = np.zeros((1, nq, c))
            s1[0, j, ci] = 1.0
            m2[j, :, ci] = ws.param_grad(zero, s1=s1)
            s2 = np.zeros((1, nq, c))
            s2[0, j, ci] = 1.0
            m3[j, :, ci] = ws.param_grad(zero, s2=s2)
    return m2, m3
