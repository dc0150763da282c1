"""Data-encoding circuit, hardware-efficient ansatz, and model readout.

The full model is: encode the embedding angles with one RY per qubit, run L
ansatz layers (RX, RY, RZ on every qubit, then a CNOT chain), and read out
per-species concentrations as scaled mean Pauli-Z expectations over the
species' qubit subset.

Every rotation angle of the composed circuit occupies one "slot":
slots [0, n_qubits) are the encoding angles, slots [n_qubits, n_qubits+n_var)
are the variational parameters in [layer][qubit][axis x,y,z] order. The
differentiation engine works purely on slot vectors, which is what makes
two-point shift rules exact for every slot.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import statevector as sv
from .errors import ConfigurationError
from .statevector import ObservablePartition, StateVector


@dataclass(frozen=True)
class AnsatzSpec:
    """Layered hardware-efficient ansatz on a nearest-neighbor CNOT chain."""

    n_qubits: int
    n_layers: int

    def __post_init__(self):
        if not 1 <= self.n_qubits <= sv.MAX_QUBITS:
            raise ConfigurationError(f"n_qubits out of range: {self.n_qubits}")
        if self.n_layers < 0:
            raise ConfigurationError(f"n_layers must be >= 0: {self.n_layers}")

    @property
    def n_params(self) -> int:
        return 3 * self.n_qubits * self.n_layers


def param_index(spec: AnsatzSpec, layer: int, qubit: int, axis: int) -> int:
    """Flat index of the rotation angle (axis 0=x, 1=y, 2=z)."""
    return (layer * spec.n_qubits + qubit) * 3 + axis


def validate_var_params(spec: AnsatzSpec, theta: np.ndarray) -> np.ndarray:
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (spec.n_params,):
        raise ConfigurationError(
            f"variational parameter count {theta.size} != {spec.n_params} "
            f"(3 * {spec.n_qubits} qubits * {spec.n_layers} layers)"
        )
    if theta.size and not np.all(np.isfinite(theta)):
        raise ConfigurationError("variational parameters must be finite")
    return theta


def default_partition(n_qubits: int) -> ObservablePartition:
    """Lower half of qubit indices reads species A (extra qubit to A)."""
    if n_qubits < 2:
        raise ConfigurationError("two-species readout needs >= 2 qubits")
    cut = (n_qubits + 1) // 2
    return ObservablePartition(tuple(range(cut)), tuple(range(cut, n_qubits)))


@dataclass
class ModelSpec:
    """Complete hybrid model: embedding -> encoding -> ansatz -> readout.

    ``output_scale`` / ``output_offset`` map the bounded mean readout
    E_i = <O_i>/|Q_i| in [-1, 1] to concentrations c_i = offset + scale * E_i.
    """

    ansatz: AnsatzSpec
    theta_var: np.ndarray
    embedding: "object"  # EmbeddingSpec; kept untyped to avoid a module cycle
    partition: ObservablePartition
    output_scale: tuple[float, float] = (1.0, 1.0)
    output_offset: tuple[float, float] = (0.0, 0.0)
    eval_counter: "object | None" = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        self.theta_var = validate_var_params(self.ansatz, self.theta_var)
        self.partition.validate(self.ansatz.n_qubits)
        if self.embedding.n_angles != self.ansatz.n_qubits:
            raise ConfigurationError(
                f"embedding produces {self.embedding.n_angles} angles, "
                f"ansatz has {self.ansatz.n_qubits} qubits"
            )
        if min(self.output_scale) <= 0:
            raise ConfigurationError("output_scale entries must be > 0")

    @property
    def n_qubits(self) -> int:
        return self.ansatz.n_qubits

    # --- flat trainable parameter vector: [embedding params | theta_var] ---

    @property
    def n_params(self) -> int:
        return self.embedding.n_params + self.ansatz.n_params

    def get_params(self) -> np.ndarray:
        return np.concatenate([self.embedding.get_params(), self.theta_var])

    def set_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        if flat.shape != (self.n_params,):
            raise ConfigurationError(
                f"parameter vector length {flat.size} != {self.n_params}"
            )
        ne = self.embedding.n_params
        self.embedding.set_params(flat[:ne])
        self.theta_var = flat[ne:].copy()

    # --- evaluation facade (the heavy lifting lives in .diff) ---

    def predict(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        angles = self.embedding.embed(points)
        raw = run_slots(
            self.ansatz,
            np.concatenate(
                [angles, np.broadcast_to(self.theta_var, (len(angles), self.theta_var.size))],
                axis=1,
            ),
        )
        if self.eval_counter is not None:
            self.eval_counter.add(len(angles))
        e_a, e_s = species_means(raw, self.partition)
        c_a = self.output_offset[0] + self.output_scale[0] * e_a
        c_s = self.output_offset[1] + self.output_scale[1] * e_s
        return c_a, c_s

    def pde_terms(self, points: np.ndarray):
        from . import diff

        return diff.pde_terms(self, points)

    def loss_grad(self, colloc, beta, ic, sources=None, reduction="sum"):
        from . import diff

        return diff.loss_grad(self, colloc, beta, ic, sources=sources,
                              reduction=reduction)


# ---------------------------------------------------------------------------
# Single-state circuit application
# ---------------------------------------------------------------------------


def apply_encoding(state: StateVector, angles) -> StateVector:
    """One RY(angles[q]) per qubit q, in a single pass."""
    angles = np.asarray(angles, dtype=np.float64)
    if angles.shape != (state.n_qubits,):
        raise ConfigurationError(
            f"expected {state.n_qubits} encoding angles, got {angles.shape}"
        )
    out = state.copy()
    for q in range(state.n_qubits):
        out = sv.apply_gate(out, sv.Gate("RY", q, angle=float(angles[q])))
    return out


def apply_ansatz(state: StateVector, spec: AnsatzSpec, theta: np.ndarray) -> StateVector:
    """RX, RY, RZ on every qubit, then the CNOT(q, q+1) chain, per layer."""
    theta = validate_var_params(spec, theta)
    if state.n_qubits != spec.n_qubits:
        raise ConfigurationError("state/ansatz qubit count mismatch")
    out = state.copy()
    for layer in range(spec.n_layers):
        for q in range(spec.n_qubits):
            for axis, kind in enumerate(("RX", "RY", "RZ")):
                angle = float(theta[param_index(spec, layer, q, axis)])
                out = sv.apply_gate(out, sv.Gate(kind, q, angle=angle))
        for q in range(spec.n_qubits - 1):
            out = sv.apply_gate(out, sv.Gate("CNOT", q + 1, control=q))
    return out


def model_output(model: ModelSpec, coords) -> tuple[float, float]:
    """Predicted (c_A, c_S) at one space-time point in original units."""
    pts = np.asarray(coords, dtype=np.float64).reshape(1, -1)
    c_a, c_s = model.predict(pts)
    return float(c_a[0]), float(c_s[0])


# ---------------------------------------------------------------------------
# Batched slot evaluation
# ---------------------------------------------------------------------------


def build_program(spec: AnsatzSpec) -> list[tuple]:
    """Gate list of the composed circuit; rotations reference slot indices.

    Entries are ("rot", kind, qubit, slot) or ("cnot", control, target).
    """
    ops: list[tuple] = []
    for q in range(spec.n_qubits):
        ops.append(("rot", "RY", q, q))
    base = spec.n_qubits
    for layer in range(spec.n_layers):
        for q in range(spec.n_qubits):
            for axis, kind in enumerate(("RX", "RY", "RZ")):
                ops.append(("rot", kind, q, base + param_index(spec, layer, q, axis)))
        for q in range(spec.n_qubits - 1):
            ops.append(("cnot", q, q + 1))
    return ops


def n_slots(spec: AnsatzSpec) -> int:
    return spec.n_qubits + spec.n_params


def run_slots(spec: AnsatzSpec, slots: np.ndarray, program: list[tuple] | None = None
              ) -> np.ndarray:
    """Evaluate per-qubit <Z_q> for a (B, n_slots) batch of slot vectors."""
    slots = np.asarray(slots, dtype=np.float64)
    if slots.ndim != 2 or slots.shape[1] != n_slots(spec):
        raise ConfigurationError(
            f"slot batch must have shape (B, {n_slots(spec)}), got {slots.shape}"
        )
    if program is None:
        program = build_program(spec)
    amps = sv.batch_zero_state(spec.n_qubits, slots.shape[0])
    for op in program:
        if op[0] == "rot":
            _, kind, qubit, slot = op
            sv.batch_rotation(amps, spec.n_qubits, kind, qubit, slots[:, slot])
        else:
            _, control, target = op
            sv.batch_cnot(amps, spec.n_qubits, control, target)
    return sv.batch_z_expectations(amps, spec.n_qubits)


def species_means(z: np.ndarray, partition: ObservablePartition
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Mean <Z> over each species' qubit subset: <O_i>/|Q_i| in [-1, 1]."""
    e_a = z[..., list(partition.q_a)].mean(axis=-1)
    e_s = z[..., list(partition.q_s)].mean(axis=-1)
    return e_a, e_s
