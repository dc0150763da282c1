"""Shift rules, input derivatives, and the total-loss gradient oracle."""

import numpy as np
import pytest

from conftest import (identity_x_model, make_model, small_collocation)
from rdqpinn import Gate, apply_gate, expectation_zsum, physics, zero_state
from rdqpinn import diff
from rdqpinn.diff import ShiftEvaluator, shift_first, shift_second


def single_ry_evaluator():
    def fn(angles):
        s = apply_gate(zero_state(1), Gate("RY", 0, angle=float(angles[0])))
        return expectation_zsum(s, [0])
    return ShiftEvaluator(fn, 1)


def product_ry_evaluator():
    """<Z_0> of RY(t0) x RY(t1) |00> = cos(t0): separable in the two slots."""
    def fn(angles):
        s = apply_gate(zero_state(2), Gate("RY", 0, angle=float(angles[0])))
        s = apply_gate(s, Gate("RY", 1, angle=float(angles[1])))
        return expectation_zsum(s, [0])
    return ShiftEvaluator(fn, 2)


def random_circuit_evaluator(rng, n, depth=6):
    gates = []
    for _ in range(depth):
        kind = rng.choice(["RX", "RY", "RZ"])
        gates.append((str(kind), int(rng.integers(n))))
        if n > 1 and rng.random() < 0.5:
            c, t = rng.choice(n, size=2, replace=False)
            gates.append(("CNOT", int(c), int(t)))
    slots = [i for i, g in enumerate(gates) if g[0] != "CNOT"]

    def fn(angles):
        s = zero_state(n)
        k = 0
        for g in gates:
            if g[0] == "CNOT":
                s = apply_gate(s, Gate("CNOT", g[2], control=g[1]))
            else:
                s = apply_gate(s, Gate(g[0], g[1], angle=float(angles[k])))
                k += 1
        return expectation_zsum(s, list(range(n)))

    return ShiftEvaluator(fn, len(slots))


class TestShiftFirst:
    def test_cos_at_zero(self):
        assert shift_first(single_ry_evaluator(), 0, [0.0]) == pytest.approx(
            0.0, abs=1e-15)

    def test_cos_at_half_pi(self):
        f = single_ry_evaluator()
        assert shift_first(f, 0, [np.pi / 2]) == pytest.approx(-1.0, abs=1e-14)

    def test_matches_finite_difference_random_circuit(self, rng):
        f = random_circuit_evaluator(rng, 3)
        angles = rng.uniform(-np.pi, np.pi, f.n_slots)
        h = 1e-5
        for slot in range(f.n_slots):
            ap = angles.copy()
            ap[slot] += h
            am = angles.copy()
            am[slot] -= h
            fd = (f(ap) - f(am)) / (2 * h)
            assert shift_first(f, slot, angles) == pytest.approx(fd, abs=1e-7)

    def test_exactness_closed_form(self):
        f = single_ry_evaluator()
        for theta in np.linspace(-np.pi, np.pi, 100):
            assert abs(shift_first(f, 0, [theta]) + np.sin(theta)) < 1e-12


class TestShiftSecond:
    def test_cos_second_derivative(self):
        f = single_ry_evaluator()
        assert shift_second(f, 0, 0, [0.0]) == pytest.approx(-1.0, abs=1e-14)

    def test_separable_cross_term_zero(self):
        f = product_ry_evaluator()
        assert shift_second(f, 0, 1, [0.7, 0.3]) == pytest.approx(0.0,
                                                                  abs=1e-14)

    def test_exactness_closed_form(self):
        f = single_ry_evaluator()
        for theta in np.linspace(-np.pi, np.pi, 100):
            assert abs(shift_second(f, 0, 0, [theta]) + np.cos(theta)) < 1e-12

    def test_symmetry_exact(self, rng):
        f = random_circuit_evaluator(rng, 2)
        angles = rng.uniform(-np.pi, np.pi, f.n_slots)
        for _ in range(5):
            i, j = rng.integers(f.n_slots, size=2)
            assert shift_second(f, int(i), int(j), angles) == shift_second(
                f, int(j), int(i), angles)

    def test_hessian_matches_finite_difference(self, rng):
        f = random_circuit_evaluator(rng, 2)
        angles = rng.uniform(-np.pi, np.pi, f.n_slots)
        h = 1e-3
        for _ in range(6):
            i, j = (int(v) for v in rng.integers(f.n_slots, size=2))
            ei = np.eye(f.n_slots)[i]
            ej = np.eye(f.n_slots)[j]
            fd = (f(angles + h * ei + h * ej) - f(angles + h * ei - h * ej)
                  - f(angles - h * ei + h * ej)
                  + f(angles - h * ei - h * ej)) / (4 * h * h)
            assert shift_second(f, i, j, angles) == pytest.approx(fd, abs=1e-5)


class TestLinearity:
    def test_zsum_derivative_is_sum_of_parts(self, rng):
        """Derivative of a Z-sum readout equals the sum of per-qubit ones."""
        n = 3
        gates = [("RY", q) for q in range(n)] + [("CNOT", 0, 1), ("RX", 2)]

        def make_eval(qubits):
            def fn(angles):
                s = zero_state(n)
                k = 0
                for g in gates:
                    if g[0] == "CNOT":
                        s = apply_gate(s, Gate("CNOT", g[2], control=g[1]))
                    else:
                        s = apply_gate(s, Gate(g[0], g[1],
                                               angle=float(angles[k])))
                        k += 1
                return expectation_zsum(s, qubits)
            return ShiftEvaluator(fn, 4)

        angles = rng.uniform(-np.pi, np.pi, 4)
        whole = make_eval([0, 1, 2])
        parts = [make_eval([q]) for q in range(n)]
        for slot in range(4):
            total = shift_first(whole, slot, angles)
            summed = sum(shift_first(p, slot, angles) for p in parts)
            assert total == pytest.approx(summed, abs=1e-12)


class TestInputDerivatives:
    def test_cosine_oracle_gradient(self):
        model = identity_x_model()
        x = 0.5
        g = diff.input_gradient(model, [x, 0.3])
        assert g[0, 0] == pytest.approx(-np.sin(x), abs=1e-12)
        assert g[0, 1] == pytest.approx(0.0, abs=1e-12)  # no time dependence
        assert g[1, 0] == pytest.approx(0.0, abs=1e-12)  # species S constant

    def test_cosine_oracle_laplacian(self):
        model = identity_x_model()
        x = 0.5
        lap, dt = diff.input_laplacian(model, [x, 0.3])
        assert lap[0] == pytest.approx(-np.cos(x), abs=1e-12)
        assert dt[0] == pytest.approx(0.0, abs=1e-12)

    def test_zero_embedding_zero_gradients(self, rng):
        model = make_model("fnn", rng=rng, param_scale=None)
        model.embedding.fnn.mlp.set_params(
            np.zeros(model.embedding.fnn.n_params))
        g = diff.input_gradient(model, [0.4, 0.6])
        np.testing.assert_allclose(g, 0.0, atol=1e-15)
        lap, _ = diff.input_laplacian(model, [0.4, 0.6])
        np.testing.assert_allclose(lap, 0.0, atol=1e-15)

    @pytest.mark.parametrize("variant", ["fnn", "qnn"])
    def test_gradient_matches_fd_random_models(self, variant, rng):
        for _ in range(5):
            model = make_model(variant, n_qubits=3, n_layers=1, rng=rng)
            pt = np.array([rng.uniform(-0.8, 0.8), rng.uniform(0.1, 0.9)])
            g = diff.input_gradient(model, pt)
            h = 1e-5
            for c in range(2):
                pp, pm = pt.copy(), pt.copy()
                pp[c] += h
                pm[c] -= h
                ca_p, cs_p = model.predict(pp[None, :])
                ca_m, cs_m = model.predict(pm[None, :])
                assert g[0, c] == pytest.approx(
                    (ca_p[0] - ca_m[0]) / (2 * h), abs=1e-6)
                assert g[1, c] == pytest.approx(
                    (cs_p[0] - cs_m[0]) / (2 * h), abs=1e-6)

    def test_laplacian_matches_richardson_fd(self, rng):
        model = make_model("fnn", n_qubits=2, n_layers=2, rng=rng)
        pt = np.array([0.3, 0.5])
        lap, _ = diff.input_laplacian(model, pt)

        def second_diff(h):
            pp, pm = pt.copy(), pt.copy()
            pp[0] += h
            pm[0] -= h
            ca_p, cs_p = model.predict(pp[None, :])
            ca_m, cs_m = model.predict(pm[None, :])
            ca_0, cs_0 = model.predict(pt[None, :])
            return (np.array([ca_p[0] - 2 * ca_0[0] + ca_m[0],
                              cs_p[0] - 2 * cs_0[0] + cs_m[0]]) / h**2)

        h = 1e-3
        d_h = second_diff(h)
        d_h2 = second_diff(h / 2)
        richardson = (4 * d_h2 - d_h) / 3
        np.testing.assert_allclose(lap, richardson, atol=1e-4)


def fd_loss_gradient(model, colloc, beta, ic, sources=None, h=1e-5):
    theta0 = model.get_params()
    fd = np.zeros_like(theta0)
    for i in range(theta0.size):
        tp = theta0.copy()
        tp[i] += h
        model.set_params(tp)
        fp = physics.total_loss(model, colloc, beta, ic, sources=sources).total
        tm = theta0.copy()
        tm[i] -= h
        model.set_params(tm)
        fm = physics.total_loss(model, colloc, beta, ic, sources=sources).total
        fd[i] = (fp - fm) / (2 * h)
    model.set_params(theta0)
    return fd


class TestLossGrad:
    def test_zero_residual_pde_gradient_vanishes(self, rng):
        """Sources chosen to zero every interior residual make G_i = 0."""
        model = make_model("fnn", rng=rng)
        colloc = small_collocation()
        beta = physics.RDParams()
        terms = model.pde_terms(colloc.interior)
        r_a, r_s = physics.residuals(terms, beta)
        sources = (r_a.copy(), r_s.copy())  # q := D[c] makes R identically 0
        _, grad = diff.loss_grad(model, colloc, beta, None, sources=sources,
                                 parts=("pde",))
        np.testing.assert_allclose(grad, 0.0, atol=1e-14)

    def test_single_point_toy_matches_fd(self, rng):
        model = make_model("fnn", n_qubits=2, n_layers=1, rng=rng)
        colloc = physics.CollocationSet(np.array([[0.3, 0.5]]))
        beta = physics.RDParams()
        _, grad = diff.loss_grad(model, colloc, beta, None)
        fd = fd_loss_gradient(model, colloc, beta, None)
        np.testing.assert_allclose(grad, fd, rtol=1e-5, atol=1e-8)

    @pytest.mark.parametrize("variant", ["fnn", "qnn"])
    def test_full_loss_matches_fd(self, variant, rng):
        model = make_model(variant, n_qubits=2, n_layers=2, rng=rng)
        colloc = small_collocation()
        beta = physics.RDParams()
        ic = physics.InitialCondition("double_bump")
        bd, grad = diff.loss_grad(model, colloc, beta, ic)
        fd = fd_loss_gradient(model, colloc, beta, ic)
        err = np.abs(grad - fd)
        rel = err / np.maximum(np.abs(fd), 1e-12)
        assert np.all((rel < 1e-4) | (err < 1e-7))

    def test_additive_decomposition(self, rng):
        model = make_model("fnn", rng=rng)
        colloc = small_collocation()
        beta = physics.RDParams()
        ic = physics.InitialCondition("double_bump")
        _, g_all = diff.loss_grad(model, colloc, beta, ic)
        g_parts = sum(diff.loss_grad(model, colloc, beta, ic, parts=(p,))[1]
                      for p in ("pde", "bc", "ic"))
        np.testing.assert_allclose(g_all, g_parts, atol=1e-12)

    def test_breakdown_matches_total_loss(self, rng):
        for variant in ("fnn", "qnn"):
            model = make_model(variant, rng=rng)
            colloc = small_collocation()
            beta = physics.RDParams()
            ic = physics.InitialCondition("double_bump")
            bd, _ = diff.loss_grad(model, colloc, beta, ic)
            bd2 = physics.total_loss(model, colloc, beta, ic)
            assert bd.total == bd2.total
            assert bd.l_pde == bd2.l_pde
            assert bd.l_bc == bd2.l_bc
            assert bd.l_ic == bd2.l_ic

    def test_mean_reduction_matches_fd(self, rng):
        model = make_model("fnn", rng=rng)
        colloc = small_collocation()
        beta = physics.RDParams()
        ic = physics.InitialCondition("double_bump")
        _, grad = diff.loss_grad(model, colloc, beta, ic, reduction="mean")
        theta0 = model.get_params()
        h = 1e-5
        fd = np.zeros_like(theta0)
        for i in range(theta0.size):
            tp = theta0.copy()
            tp[i] += h
            model.set_params(tp)
            fp = physics.total_loss(model, colloc, beta, ic,
                                    reduction="mean").total
            tm = theta0.copy()
            tm[i] -= h
            model.set_params(tm)
            fm = physics.total_loss(model, colloc, beta, ic,
                                    reduction="mean").total
            fd[i] = (fp - fm) / (2 * h)
        model.set_params(theta0)
        np.testing.assert_allclose(grad, fd, rtol=1e-4, atol=1e-8)
