"""Dense statevector simulation for small qubit registers.

Convention: qubit 0 is the least significant bit of the basis index, so the
amplitude at index b describes the computational basis state whose q-th bit
(b >> q) & 1 gives the state of qubit q. All rotations follow
R_a(theta) = exp(-i * theta * sigma_a / 2) for a in {x, y, z}. Global phase is
never normalized away; every exposed quantity is phase invariant.

Two layers live here:

* value-semantics single-state operations (``zero_state``, ``apply_gate``,
  ``expectation_zsum``) operating on :class:`StateVector`;
* batched kernels (``batch_*``) operating on a ``(B, 2**n)`` complex array
  with one independent pure state per row. The differentiation engine shifts
  thousands of rotation angles per training step, so gates must vectorize
  over rows with per-row angles.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError

MAX_QUBITS = 12

ROTATION_KINDS = ("RX", "RY", "RZ")
GATE_KINDS = ROTATION_KINDS + ("CNOT",)


@dataclass
class StateVector:
    """Pure n-qubit state: ``amplitudes[b]`` with qubit 0 = LSB of b."""

    n_qubits: int
    amplitudes: np.ndarray

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.n_qubits, self.amplitudes.copy())


@dataclass
class Gate:
    """Single gate: RX/RY/RZ on ``target`` (radians) or CNOT(control, target)."""

    kind: str
    target: int
    control: int | None = None
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ConfigurationError(f"unknown gate kind {self.kind!r}")
        if self.kind == "CNOT":
            if self.control is None:
                raise ConfigurationError("CNOT requires a control qubit")
            if self.control == self.target:
                raise ConfigurationError("CNOT control and target must differ")
        elif self.control is not None:
            raise ConfigurationError(f"{self.kind} takes no control qubit")

    def inverse(self) -> "Gate":
        if self.kind == "CNOT":
            return Gate("CNOT", self.target, control=self.control)
        return Gate(self.kind, self.target, angle=-self.angle)


@dataclass(frozen=True)
class ObservablePartition:
    """Disjoint nonempty qubit sets reading out species A and S."""

    q_a: tuple[int, ...]
    q_s: tuple[int, ...]

    def __post_init__(self):
        a, s = set(self.q_a), set(self.q_s)
        if not a or not s:
            raise ConfigurationError("both readout sets must be nonempty")
        if a & s:
            raise ConfigurationError(f"readout sets overlap: {sorted(a & s)}")

    def validate(self, n_qubits: int) -> None:
        for q in (*self.q_a, *self.q_s):
            if not 0 <= q < n_qubits:
                raise ConfigurationError(
                    f"readout qubit {q} out of range for {n_qubits} qubits"
                )


def zero_state(n_qubits: int) -> StateVector:
    """|0...0> on ``n_qubits`` qubits. Bounds 1..12 keep memory desk-scale."""
    if not 1 <= n_qubits <= MAX_QUBITS:
        raise ConfigurationError(
            f"n_qubits must be in [1, {MAX_QUBITS}], got {n_qubits}"
        )
    amps = np.zeros(2**n_qubits, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(n_qubits, amps)


def _check_qubit(q: int, n: int) -> None:
    if not 0 <= q < n:
        raise ConfigurationError(f"qubit index {q} out of range for {n} qubits")


def apply_gate(state: StateVector, gate: Gate) -> StateVector:
    """Apply a gate, returning a new StateVector (input left untouched)."""
    n = state.n_qubits
    _check_qubit(gate.target, n)
    amps = state.amplitudes[np.newaxis, :].copy()
    if gate.kind == "CNOT":
        _check_qubit(gate.control, n)
        batch_cnot(amps, n, gate.control, gate.target)
    else:
        batch_rotation(amps, n, gate.kind, gate.target, np.asarray([gate.angle]))
    return StateVector(n, amps[0])


def expectation_zsum(state: StateVector, qubits) -> float:
    """<sum_{j in qubits} Z_j> on ``state``; result lies in [-k, k], k=|qubits|."""
    qubits = tuple(qubits)
    if not qubits:
        raise ConfigurationError("expectation_zsum needs a nonempty qubit set")
    n = state.n_qubits
    for q in qubits:
        _check_qubit(q, n)
    z = batch_z_expectations(state.amplitudes[np.newaxis, :], n)
    return float(z[0, list(qubits)].sum())


# ---------------------------------------------------------------------------
# Batched kernels. `amps` has shape (B, 2**n) and is modified in place.
# Reshaping to (B, 2**(n-1-q), 2, 2**q) exposes qubit q as the middle axis
# (qubit 0 = LSB means qubit q toggles blocks of length 2**q).
# ---------------------------------------------------------------------------


def batch_zero_state(n_qubits: int, batch: int) -> np.ndarray:
    amps = np.zeros((batch, 2**n_qubits), dtype=np.complex128)
    amps[:, 0] = 1.0
    return amps


def _qubit_view(amps: np.ndarray, n: int, q: int) -> np.ndarray:
    b = amps.shape[0]
    return amps.reshape(b, 2 ** (n - 1 - q), 2, 2**q)


def batch_rotation(
    amps: np.ndarray, n: int, kind: str, qubit: int, angles: np.ndarray
) -> None:
    """Apply R_kind(angles[i]) on `qubit` to row i, in place."""
    view = _qubit_view(amps, n, qubit)
    half = 0.5 * np.asarray(angles, dtype=np.float64)
    c = np.cos(half)[:, None, None]
    a0 = view[:, :, 0, :]
    a1 = view[:, :, 1, :]
    if kind == "RY":
        s = np.sin(half)[:, None, None]
        new0 = c * a0 - s * a1
        new1 = s * a0 + c * a1
    elif kind == "RX":
        s = (-1j) * np.sin(half)[:, None, None]
        new0 = c * a0 + s * a1
        new1 = s * a0 + c * a1
    elif kind == "RZ":
        phase = np.exp(-1j * half)[:, None, None]
        new0 = phase * a0
        new1 = np.conj(phase) * a1
    else:
        raise ConfigurationError(f"not a rotation kind: {kind!r}")
    view[:, :, 0, :] = new0
    view[:, :, 1, :] = new1


def batch_cnot(amps: np.ndarray, n: int, control: int, target: int) -> None:
    """Apply CNOT(control, target) to every row, in place."""
    if control == target:
        raise ConfigurationError("CNOT control and target must differ")
    b = amps.shape[0]
    hi, lo = max(control, target), min(control, target)
    view = amps.reshape(
        b, 2 ** (n - 1 - hi), 2, 2 ** (hi - lo - 1), 2, 2**lo
    )
    # axis 2 = qubit hi, axis 4 = qubit lo
    if control > target:
        c_ax, t_ax = 2, 4
    else:
        c_ax, t_ax = 4, 2
    idx10 = [slice(None)] * 6
    idx11 = [slice(None)] * 6
    idx10[c_ax], idx10[t_ax] = 1, 0
    idx11[c_ax], idx11[t_ax] = 1, 1
    tmp = view[tuple(idx10)].copy()
    view[tuple(idx10)] = view[tuple(idx11)]
    view[tuple(idx11)] = tmp


def batch_z_expectations(amps: np.ndarray, n: int) -> np.ndarray:
    """Per-qubit <Z_q> for every row: returns (B, n) float array."""
    b = amps.shape[0]
    probs = np.abs(amps) ** 2
    out = np.empty((b, n))
    for q in range(n):
        view = probs.reshape(b, 2 ** (n - 1 - q), 2, 2**q)
        marg = view.sum(axis=(1, 3))
        out[:, q] = marg[:, 0] - marg[:, 1]
    return out
