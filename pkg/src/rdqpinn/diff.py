"""Exact differentiation of the hybrid model.

Every derivative here is assembled from two-point parameter shifts on circuit
rotation angles (exact for Pauli-generated rotations) chained with exact
embedding jets. The PDE residuals contain first time derivatives and
Laplacians of the model output, so the gradient of the PDE loss with respect
to the trainable parameters differentiates *through* those input-derivative
assemblies: mixed second- and third-order shift tables on the circuit
contract against the embedding jets and their parameter derivatives. No
finite differences appear anywhere on this path; finite differences are the
independent oracle the tests compare against.

Shift evaluations are deduplicated per collocation batch (nested shifts with
repeated slots collide), and accumulation over points uses fixed-order numpy
reductions, so results are bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import circuits, physics, shifts
from .circuits import ModelSpec
from .errors import ConfigurationError

HALF_PI = np.pi / 2.0


@dataclass
class ShiftEvaluator:
    """Scalar expectation f(angles) with every slot a exp(-i*theta*P/2) gate."""

    fn: Callable[[np.ndarray], float]
    n_slots: int

    def __call__(self, angles: np.ndarray) -> float:
        return float(self.fn(np.asarray(angles, dtype=np.float64)))


def _shifted(angles: np.ndarray, slot: int, amount: float) -> np.ndarray:
    out = np.array(angles, dtype=np.float64)
    out[slot] += amount
    return out


def shift_first(f: ShiftEvaluator, slot: int, angles: np.ndarray) -> float:
    """Exact d f / d angles[slot] via the two-point rule at +-pi/2."""
    if not 0 <= slot < f.n_slots:
        raise ConfigurationError(f"slot {slot} out of range")
    return 0.5 * (f(_shifted(angles, slot, HALF_PI))
                  - f(_shifted(angles, slot, -HALF_PI)))


def shift_second(f: ShiftEvaluator, slot_i: int, slot_j: int,
                 angles: np.ndarray) -> float:
    """Exact d2 f / d angles[i] d angles[j] via the four-point rule."""
    for s in (slot_i, slot_j):
        if not 0 <= s < f.n_slots:
            raise ConfigurationError(f"slot {s} out of range")
    pp = f(_shifted(_shifted(angles, slot_i, HALF_PI), slot_j, HALF_PI))
    pm = f(_shifted(_shifted(angles, slot_i, HALF_PI), slot_j, -HALF_PI))
    mp = f(_shifted(_shifted(angles, slot_i, -HALF_PI), slot_j, HALF_PI))
    mm = f(_shifted(_shifted(angles, slot_i, -HALF_PI), slot_j, -HALF_PI))
    return 0.25 * (pp - pm - mp + mm)


def expectation_evaluator(model: ModelSpec, species: str = "a") -> ShiftEvaluator:
    """Mean-Z readout of one species as a function of all circuit slots."""
    qubits = model.partition.q_a if species == "a" else model.partition.q_s
    cols = list(qubits)
    ansatz = model.ansatz
    program = circuits.build_program(ansatz)

    def fn(slots: np.ndarray) -> float:
        z = circuits.run_slots(ansatz, slots[np.newaxis, :], program)
        return float(z[0, cols].mean())

    return ShiftEvaluator(fn, circuits.n_slots(ansatz))


# ---------------------------------------------------------------------------
# Batched circuit derivative tables, reduced to the two species readouts
# ---------------------------------------------------------------------------


class _CircuitTables:
    """Species-reduced derivative tables of the main circuit over a batch.

    ``orders`` selects which multi-index families to evaluate: "enc1"/"enc2"/
    "enc3" for encoding-angle derivatives, "var1" for first-order variational
    derivatives, "mix2"/"mix3" for mixed variational-encoding derivatives.
    Plain values are always included.
    """

    def __init__(self, model: ModelSpec, angles: np.ndarray, orders: set):
        ansatz = model.ansatz
        nq, nv = ansatz.n_qubits, ansatz.n_params
        enc = tuple(range(nq))
        var = tuple(range(nq, nq + nv))
        mis = [()]
        if "enc1" in orders:
            mis += shifts.first_order(enc)
        if "enc2" in orders:
            mis += shifts.second_order(enc, enc)
        if "enc3" in orders:
            mis += shifts.third_order(enc, enc, enc)
        if "var1" in orders:
            mis += shifts.first_order(var)
        if "mix2" in orders:
            mis += shifts.second_order(var, enc)
        if "mix3" in orders:
            mis += shifts.third_order(var, enc, enc)
        slots = np.concatenate(
            [angles, np.broadcast_to(model.theta_var, (len(angles), nv))], axis=1)
        program = circuits.build_program(ansatz)
        raw, n_evals = shifts.derivative_tables(
            lambda s: circuits.run_slots(ansatz, s, program), slots, mis)
        if model.eval_counter is not None:
            model.eval_counter.add(n_evals)
        part = model.partition
        self.t = {mi: np.stack(circuits.species_means(v, part), axis=1)
                  for mi, v in raw.items()}
        self.enc, self.var, self.nq, self.nv = enc, var, nq, nv
        self.n_points = len(angles)

    def values(self) -> np.ndarray:
        return self.t[()]

    def g_enc(self) -> np.ndarray:
        """(P, 2, nq): d E_i / d alpha_j."""
        out = np.empty((self.n_points, 2, self.nq))
        for j in self.enc:
            out[:, :, j] = self.t[(j,)]
        return out

    def h_enc(self) -> np.ndarray:
        out = np.empty((self.n_points, 2, self.nq, self.nq))
        for j in self.enc:
            for k in self.enc:
                out[:, :, j, k] = self.t[tuple(sorted((j, k)))]
        return out

    def t_enc(self) -> np.ndarray:
        out = np.empty((self.n_points, 2, self.nq, self.nq, self.nq))
        for j in self.enc:
            for k in self.enc:
                for l in self.enc:
                    out[:, :, j, k, l] = self.t[tuple(sorted((j, k, l)))]
        return out

    def g_var(self) -> np.ndarray:
        out = np.empty((self.n_points, 2, self.nv))
        for i, v in enumerate(self.var):
            out[:, :, i] = self.t[(v,)]
        return out

    def h_mix(self) -> np.ndarray:
        """(P, 2, nv, nq): d2 E / d theta_v d alpha_j."""
        out = np.empty((self.n_points, 2, self.nv, self.nq))
        for i, v in enumerate(self.var):
            for j in self.enc:
                out[:, :, i, j] = self.t[tuple(sorted((v, j)))]
        return out

    def t_mix(self) -> np.ndarray:
        out = np.empty((self.n_points, 2, self.nv, self.nq, self.nq))
        for i, v in enumerate(self.var):
            for j in self.enc:
                for k in self.enc:
                    out[:, :, i, j, k] = self.t[tuple(sorted((v, j, k)))]
        return out


def _spatial_indices(n_coords: int) -> list[int]:
    return list(range(n_coords - 1))


def pde_terms(model: ModelSpec, points: np.ndarray) -> dict:
    """Fields plus dc/dt and lap(c) per species at every point, exactly."""
    points = np.asarray(points, dtype=np.float64)
    ws = model.embedding.jet_workspace(points, need_mixed=False,
                                       counter=model.eval_counter)
    jet = ws.jet
    tab = _CircuitTables(model, jet.alpha, orders={"enc1", "enc2"})
    scale = np.asarray(model.output_scale)
    offset = np.asarray(model.output_offset)
    c = offset[None, :] + scale[None, :] * tab.values()
    g = tab.g_enc()
    h = tab.h_enc()
    n_coords = points.shape[1]
    t_idx = n_coords - 1
    dt = scale[None, :] * np.einsum("pij,pj->pi", g, jet.d1[:, :, t_idx])
    lap = np.zeros_like(dt)
    for ci in _spatial_indices(n_coords):
        lap += np.einsum("pijk,pj,pk->pi", h, jet.d1[:, :, ci], jet.d1[:, :, ci])
        lap += np.einsum("pij,pj->pi", g, jet.d2[:, :, ci])
    lap *= scale[None, :]
    return {"c_a": c[:, 0], "c_s": c[:, 1], "dt_a": dt[:, 0], "dt_s": dt[:, 1],
            "lap_a": lap[:, 0], "lap_s": lap[:, 1]}


def input_gradient(model: ModelSpec, coords) -> np.ndarray:
    """First derivatives of (c_A, c_S) w.r.t. each coordinate: (2, C)."""
    pts = np.asarray(coords, dtype=np.float64).reshape(1, -1)
    jet = model.embedding.jet_workspace(pts, counter=model.eval_counter).jet
    tab = _CircuitTables(model, jet.alpha, orders={"enc1"})
    scale = np.asarray(model.output_scale)
    g = tab.g_enc()
    return scale[:, None] * np.einsum("pij,pjc->ic", g, jet.d1)


def input_laplacian(model: ModelSpec, coords) -> tuple[np.ndarray, np.ndarray]:
    """(lap, dt) per species at one point; lap sums spatial second derivatives."""
    pts = np.asarray(coords, dtype=np.float64).reshape(1, -1)
    terms = pde_terms(model, pts)
    lap = np.array([terms["lap_a"][0], terms["lap_s"][0]])
    dt = np.array([terms["dt_a"][0], terms["dt_s"][0]])
    return lap, dt


# ---------------------------------------------------------------------------
# Total-loss gradient
# ---------------------------------------------------------------------------


def loss_grad(model: ModelSpec, colloc: physics.CollocationSet,
              beta: physics.RDParams, ic: physics.InitialCondition | None,
              sources=None, reduction: str = "sum",
              parts: tuple = ("pde", "bc", "ic")):
    """Gradient of the physics-informed loss over all trainable parameters.

    Returns (LossBreakdown, grad) with grad laid out as
    [embedding params | variational params]. ``parts`` restricts which loss
    terms contribute (used to verify additivity); excluded parts report zero.
    """
    if reduction not in ("sum", "mean"):
        raise ConfigurationError(f"unknown reduction {reduction!r}")
    nv = model.ansatz.n_params
    ne = model.embedding.n_params
    grad_var = np.zeros(nv)
    grad_emb = np.zeros(ne)
    pde_a = pde_s = 0.0
    bc_terms: list[float] = []
    bc_a_terms: list[float] = []
    bc_s_terms: list[float] = []
    ic_a = ic_s = 0.0
    scale = np.asarray(model.output_scale)
    offset = np.asarray(model.output_offset)
    n_coords = colloc.interior.shape[1]
    t_idx = n_coords - 1

    if "pde" in parts:
        points = colloc.interior
        ws = model.embedding.jet_workspace(points, need_mixed=True,
                                           counter=model.eval_counter)
        jet = ws.jet
        tab = _CircuitTables(model, jet.alpha,
                             orders={"enc1", "enc2", "enc3", "var1", "mix2", "mix3"})
        vals = offset[None, :] + scale[None, :] * tab.values()
        g = tab.g_enc()
        h = tab.h_enc()
        t3 = tab.t_enc()
        dt = scale[None, :] * np.einsum("pij,pj->pi", g, jet.d1[:, :, t_idx])
        lap = np.zeros_like(dt)
        for ci in _spatial_indices(n_coords):
            lap += np.einsum("pijk,pj,pk->pi", h, jet.d1[:, :, ci],
                             jet.d1[:, :, ci])
            lap += np.einsum("pij,pj->pi", g, jet.d2[:, :, ci])
        lap *= scale[None, :]
        fields = {"c_a": vals[:, 0], "c_s": vals[:, 1],
                  "dt_a": dt[:, 0], "dt_s": dt[:, 1],
                  "lap_a": lap[:, 0], "lap_s": lap[:, 1]}
        q = physics._evaluate_sources(sources, points)
        weight = 1.0 / len(points) if reduction == "mean" else 1.0
        (r_a, r_s), w_val, w_t, w_lap = physics.pde_cotangents(
            fields, beta, q, weight)
        pde_a = float(np.sum(r_a**2)) * weight
        pde_s = float(np.sum(r_s**2)) * weight

        # channel weights folded with the per-species output scale
        sv_ = w_val * scale[None, :]
        st_ = w_t * scale[None, :]
        sl_ = w_lap * scale[None, :]

        # --- variational parameters ---
        grad_var += np.einsum("pi,piv->v", sv_, tab.g_var())
        hm = tab.h_mix()
        grad_var += np.einsum("pi,pivj,pj->v", st_, hm, jet.d1[:, :, t_idx])
        tm = tab.t_mix()
        for ci in _spatial_indices(n_coords):
            d1c = jet.d1[:, :, ci]
            grad_var += np.einsum("pi,pivjk,pj,pk->v", sl_, tm, d1c, d1c)
            grad_var += np.einsum("pi,pivj,pj->v", sl_, hm, jet.d2[:, :, ci])

        # --- embedding parameters: seeds on alpha and its mixed derivatives ---
        w0 = np.einsum("pi,pij->pj", sv_, g)
        w0 += np.einsum("pi,pijk,pj->pk", st_, h, jet.d1[:, :, t_idx])
        w1 = np.zeros((len(points), model.n_qubits, n_coords))
        w2 = np.zeros_like(w1)
        w1[:, :, t_idx] = np.einsum("pi,pij->pj", st_, g)
        for ci in _spatial_indices(n_coords):
            d1c = jet.d1[:, :, ci]
            w0 += np.einsum("pi,pijkl,pk,pl->pj", sl_, t3, d1c, d1c)
            w0 += np.einsum("pi,pijk,pk->pj", sl_, h, jet.d2[:, :, ci])
            w1[:, :, ci] = 2.0 * np.einsum("pi,pijk,pk->pj", sl_, h, d1c)
            w2[:, :, ci] = np.einsum("pi,pij->pj", sl_, g)
        grad_emb += ws.param_grad(w0, w1, w2)

    if "bc" in parts:
        for w_seg, pair in zip(colloc.lambda_bc, colloc.boundary):
            n_b = len(pair.lo)
            seg_scale = 1.0 / n_b if reduction == "mean" else 1.0
            # two passes: evaluate values first to form the pair differences
            lo_ws = model.embedding.value_workspace(pair.lo,
                                                    counter=model.eval_counter)
            hi_ws = model.embedding.value_workspace(pair.hi,
                                                    counter=model.eval_counter)
            lo_tab = _CircuitTables(model, lo_ws.alpha, orders={"enc1", "var1"})
            hi_tab = _CircuitTables(model, hi_ws.alpha, orders={"enc1", "var1"})
            lo_vals = offset[None, :] + scale[None, :] * lo_tab.values()
            hi_vals = offset[None, :] + scale[None, :] * hi_tab.values()
            diff_v = lo_vals - hi_vals
            bc_a_terms.append(float(np.sum(diff_v[:, 0] ** 2)) * seg_scale)
            bc_s_terms.append(float(np.sum(diff_v[:, 1] ** 2)) * seg_scale)
            bc_terms.append(bc_a_terms[-1] + bc_s_terms[-1])
            u = 2.0 * w_seg * seg_scale * diff_v * scale[None, :]
            for tab_, ws_, sign in ((lo_tab, lo_ws, 1.0), (hi_tab, hi_ws, -1.0)):
                grad_var += sign * np.einsum("pi,piv->v", u, tab_.g_var())
                g_enc = np.empty((tab_.n_points, 2, tab_.nq))
                for j in tab_.enc:
                    g_enc[:, :, j] = tab_.t[(j,)]
                grad_emb += sign * ws_.param_grad(
                    np.einsum("pi,pij->pj", u, g_enc))

    if "ic" in parts and colloc.initial is not None and len(colloc.initial):
        if ic is None:
            raise ConfigurationError("initial points given but no initial condition")
        pts0 = colloc.initial
        n_i = len(pts0)
        s0_scale = 1.0 / n_i if reduction == "mean" else 1.0
        ws0 = model.embedding.value_workspace(pts0, counter=model.eval_counter)
        tab0 = _CircuitTables(model, ws0.alpha, orders={"enc1", "var1"})
        vals0 = offset[None, :] + scale[None, :] * tab0.values()
        tgt_a, tgt_s = ic.values(pts0[:, :-1], beta)
        err = vals0 - np.stack([tgt_a, tgt_s], axis=1)
        ic_a = float(np.sum(err[:, 0] ** 2)) * s0_scale
        ic_s = float(np.sum(err[:, 1] ** 2)) * s0_scale
        u = 2.0 * colloc.lambda_ic * s0_scale * err * scale[None, :]
        grad_var += np.einsum("pi,piv->v", u, tab0.g_var())
        g_enc = np.empty((tab0.n_points, 2, tab0.nq))
        for j in tab0.enc:
            g_enc[:, :, j] = tab0.t[(j,)]
        grad_emb += ws0.param_grad(np.einsum("pi,pij->pj", u, g_enc))

    l_pde = pde_a + pde_s
    l_ic = ic_a + ic_s
    used_bc = bc_terms if bc_terms else [0.0] * len(colloc.boundary)
    used_bc_a = bc_a_terms if bc_a_terms else [0.0] * len(colloc.boundary)
    used_bc_s = bc_s_terms if bc_s_terms else [0.0] * len(colloc.boundary)
    total = l_pde + sum(w * s_ for w, s_ in zip(colloc.lambda_bc, used_bc)) \
        + colloc.lambda_ic * l_ic
    l_a = pde_a + sum(w * s_ for w, s_ in zip(colloc.lambda_bc, used_bc_a)) \
        + colloc.lambda_ic * ic_a
    l_s = pde_s + sum(w * s_ for w, s_ in zip(colloc.lambda_bc, used_bc_s)) \
        + colloc.lambda_ic * ic_s
    breakdown = physics.LossBreakdown(l_pde, tuple(used_bc), l_ic, total, l_a, l_s)
    return breakdown, np.concatenate([grad_emb, grad_var])
