"""Training loop, optimizers, the classical PINN baseline, and checkpoints.

One epoch is one full-batch optimizer iteration over the entire collocation
set (L-BFGS is deterministic full-batch; there is no mini-batching). The loop
follows the forward / loss / gradient / update cycle, stops at the epoch
budget or when the total loss drops below the tolerance, and returns the
best-loss parameter snapshot seen so far.

L-BFGS uses a strong-Wolfe line search; when the line search fails the epoch
falls back to a plain gradient step with a fixed learning rate and the event
is recorded in the history. Adam is provided as the fallback optimizer for
landscapes where L-BFGS stalls.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, asdict

import numpy as np

from . import circuits, embedding as emb, physics
from .errors import CheckpointError, ConfigurationError
from .mlp import Mlp

CHECKPOINT_VERSION = 1


@dataclass
class EvalCounter:
    n: int = 0

    def add(self, k: int) -> None:
        self.n += int(k)


@dataclass
class AdamConfig:
    lr: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass
class LbfgsConfig:
    history: int = 10
    c1: float = 1e-4
    c2: float = 0.9
    max_ls: int = 25
    fallback_lr: float = 1e-2


@dataclass
class TrainConfig:
    epochs: int = 100
    optimizer: str = "lbfgs"
    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    seed: int = 0
    tolerance: float = 1e-9
    reduction: str = "sum"
    n_qubits: int = 2
    n_layers: int = 5
    mse_every: int = 1

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.optimizer not in ("lbfgs", "adam"):
            raise ConfigurationError(f"unknown optimizer {self.optimizer!r}")
        if not 2 <= self.n_qubits <= 8:
            raise ConfigurationError(
                f"n_qubits must be within 2..8, got {self.n_qubits}")
        if not 5 <= self.n_layers <= 20:
            raise ConfigurationError(
                f"n_layers must be within 5..20, got {self.n_layers}")


HISTORY_COLUMNS = ("epoch", "total", "l_pde", "l_A", "l_S", "l_bc", "l_ic",
                   "mse_A", "mse_S", "wall_ms", "circuit_evals")


@dataclass
class TrainHistory:
    records: list[dict] = field(default_factory=list)
    events: list[tuple[int, str]] = field(default_factory=list)

    def append(self, **kwargs) -> None:
        self.records.append(dict(kwargs))

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def __len__(self) -> int:
        return len(self.records)


# ---------------------------------------------------------------------------
# Classical PINN baseline
# ---------------------------------------------------------------------------


class PinnBaseline:
    """Plain MLP mapping normalized coordinates to (c_A, c_S).

    It is trained against the identical physics-informed loss as the hybrid
    models; only the function family differs. Input derivatives come from the
    MLP jet propagation, parameter gradients from the jet VJP.
    """

    def __init__(self, normalization: emb.NormalizationSpec, rng,
                 neurons: int = 32, hidden_layers: int = 4):
        d_in = normalization.n_coords
        self.normalization = normalization
        self.mlp = Mlp.create([d_in] + [neurons] * hidden_layers + [2], rng)

    @property
    def n_params(self) -> int:
        return self.mlp.n_params

    def get_params(self) -> np.ndarray:
        return self.mlp.get_params()

    def set_params(self, flat: np.ndarray) -> None:
        self.mlp.set_params(flat)

    def predict(self, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = self.normalization.to_normalized(points)
        out = self.mlp.forward(z)
        return out[:, 0], out[:, 1]

    def pde_terms(self, points: np.ndarray) -> dict:
        z = self.normalization.to_normalized(points)
        v, jac, hes = self.mlp.forward_jet(z)
        r = self.normalization.scales()
        n_coords = z.shape[1]
        dt = jac[:, :, n_coords - 1] * r[n_coords - 1]
        lap = np.zeros_like(v)
        for ci in range(n_coords - 1):
            lap += hes[:, :, ci, ci] * r[ci] ** 2
        return {"c_a": v[:, 0], "c_s": v[:, 1], "dt_a": dt[:, 0],
                "dt_s": dt[:, 1], "lap_a": lap[:, 0], "lap_s": lap[:, 1]}

    def loss_grad(self, colloc: physics.CollocationSet, beta: physics.RDParams,
                  ic, sources=None, reduction: str = "sum",
                  parts: tuple = ("pde", "bc", "ic")):
        r = self.normalization.scales()
        n_coords = self.normalization.n_coords
        t_idx = n_coords - 1
        grad = np.zeros(self.n_params)
        pde_a = pde_s = ic_a = ic_s = 0.0
        bc_terms, bc_a_terms, bc_s_terms = [], [], []

        if "pde" in parts:
            pts = colloc.interior
            z = self.normalization.to_normalized(pts)
            v, jac, hes, cache = self.mlp.forward_jet(z, want_cache=True)
            dt = jac[:, :, t_idx] * r[t_idx]
            lap = np.zeros_like(v)
            for ci in range(n_coords - 1):
                lap += hes[:, :, ci, ci] * r[ci] ** 2
            fields = {"c_a": v[:, 0], "c_s": v[:, 1], "dt_a": dt[:, 0],
                      "dt_s": dt[:, 1], "lap_a": lap[:, 0], "lap_s": lap[:, 1]}
            q = physics._evaluate_sources(sources, pts)
            weight = 1.0 / len(pts) if reduction == "mean" else 1.0
            (r_a, r_s), w_val, w_t, w_lap = physics.pde_cotangents(
                fields, beta, q, weight)
            pde_a = float(np.sum(r_a**2)) * weight
            pde_s = float(np.sum(r_s**2)) * weight
            s_jac = np.zeros_like(jac)
            s_hes = np.zeros_like(hes)
            s_jac[:, :, t_idx] = w_t * r[t_idx]
            for ci in range(n_coords - 1):
                s_hes[:, :, ci, ci] = w_lap * r[ci] ** 2
            grad += self.mlp.vjp_jet(cache, w_val, s_jac, s_hes)

        if "bc" in parts:
            for w_seg, pair in zip(colloc.lambda_bc, colloc.boundary):
                n_b = len(pair.lo)
                s = 1.0 / n_b if reduction == "mean" else 1.0
                z_lo = self.normalization.to_normalized(pair.lo)
                z_hi = self.normalization.to_normalized(pair.hi)
                v_lo, _, _, cache_lo = self.mlp.forward_jet(z_lo, want_cache=True)
                v_hi, _, _, cache_hi = self.mlp.forward_jet(z_hi, want_cache=True)
                diff_v = v_lo - v_hi
                bc_a_terms.append(float(np.sum(diff_v[:, 0] ** 2)) * s)
                bc_s_terms.append(float(np.sum(diff_v[:, 1] ** 2)) * s)
                bc_terms.append(bc_a_terms[-1] + bc_s_terms[-1])
                u = 2.0 * w_seg * s * diff_v
                grad += self.mlp.vjp_jet(cache_lo, u, None, None)
                grad -= self.mlp.vjp_jet(cache_hi, u, None, None)

        if "ic" in parts and colloc.initial is not None and len(colloc.initial):
            pts0 = colloc.initial
            s = 1.0 / len(pts0) if reduction == "mean" else 1.0
            z0 = self.normalization.to_normalized(pts0)
            v0, _, _, cache0 = self.mlp.forward_jet(z0, want_cache=True)
            tgt_a, tgt_s = ic.values(pts0[:, :-1], beta)
            err = v0 - np.stack([tgt_a, tgt_s], axis=1)
            ic_a = float(np.sum(err[:, 0] ** 2)) * s
            ic_s = float(np.sum(err[:, 1] ** 2)) * s
            grad += self.mlp.vjp_jet(cache0, 2.0 * colloc.lambda_ic * s * err,
                                     None, None)

        if not bc_terms:
            bc_terms = [0.0] * len(colloc.boundary)
            bc_a_terms = [0.0] * len(colloc.boundary)
            bc_s_terms = [0.0] * len(colloc.boundary)
        l_pde = pde_a + pde_s
        l_ic = ic_a + ic_s
        total = l_pde + sum(w * t_ for w, t_ in zip(colloc.lambda_bc, bc_terms)) \
            + colloc.lambda_ic * l_ic
        l_a = pde_a + sum(w * t_ for w, t_ in zip(colloc.lambda_bc, bc_a_terms)) \
            + colloc.lambda_ic * ic_a
        l_s = pde_s + sum(w * t_ for w, t_ in zip(colloc.lambda_bc, bc_s_terms)) \
            + colloc.lambda_ic * ic_s
        breakdown = physics.LossBreakdown(l_pde, tuple(bc_terms), l_ic, total,
                                          l_a, l_s)
        return breakdown, grad


# ---------------------------------------------------------------------------
# Optimizers
# ---------------------------------------------------------------------------


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    t: int = 0

    @classmethod
    def fresh(cls, n: int) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0)


def adam_step(theta: np.ndarray, grad: np.ndarray, state: AdamState,
              cfg: AdamConfig) -> np.ndarray:
    state.t += 1
    state.m = cfg.beta1 * state.m + (1 - cfg.beta1) * grad
    state.v = cfg.beta2 * state.v + (1 - cfg.beta2) * grad**2
    m_hat = state.m / (1 - cfg.beta1**state.t)
    v_hat = state.v / (1 - cfg.beta2**state.t)
    return theta - cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)


class LbfgsState:
    """Curvature pair history for the two-loop recursion."""

    def __init__(self, history: int):
        self.history = history
        self.s: list[np.ndarray] = []
        self.y: list[np.ndarray] = []

    def push(self, s: np.ndarray, y: np.ndarray) -> None:
        if float(s @ y) > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y):
            self.s.append(s)
            self.y.append(y)
            if len(self.s) > self.history:
                self.s.pop(0)
                self.y.pop(0)

    def direction(self, grad: np.ndarray) -> np.ndarray:
        q = grad.copy()
        alphas = []
        for s, y in zip(reversed(self.s), reversed(self.y)):
            rho = 1.0 / float(y @ s)
            a = rho * float(s @ q)
            alphas.append((a, rho, s, y))
            q -= a * y
        if self.s:
            s, y = self.s[-1], self.y[-1]
            q *= float(s @ y) / float(y @ y)
        for a, rho, s, y in reversed(alphas):
            b = rho * float(y @ q)
            q += (a - b) * s
        return -q


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic through (a, fa, ga), (b, fb, gb); nan on failure."""
    d1 = ga + gb - 3 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return np.nan
    d2 = np.sqrt(disc) * np.sign(b - a)
    denom = gb - ga + 2 * d2
    if denom == 0:
        return np.nan
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(fun, theta, f0, g0, direction, c1=1e-4, c2=0.9, max_iter=25,
                 alpha0=1.0):
    """Strong-Wolfe line search (bracket + zoom with cubic interpolation).

    ``fun(alpha)`` returns (f, g_dot_d, aux) at theta + alpha*direction.
    Returns (alpha, f, aux, n_evals) or (None, ..., n_evals) on failure.
    """
    d0 = float(g0 @ direction)
    if d0 >= 0:
        return None, f0, None, 0
    evals = 0

    def phi(alpha):
        nonlocal evals
        evals += 1
        return fun(alpha)

    alpha_prev, f_prev, d_prev = 0.0, f0, d0
    alpha = alpha0
    bracket = None
    for _ in range(max_iter):
        f, d, aux = phi(alpha)
        if f > f0 + c1 * alpha * d0 or (evals > 1 and f >= f_prev):
            bracket = (alpha_prev, f_prev, d_prev, alpha, f, d)
            break
        if abs(d) <= -c2 * d0:
            return alpha, f, aux, evals
        if d >= 0:
            bracket = (alpha, f, d, alpha_prev, f_prev, d_prev)
            break
        alpha_prev, f_prev, d_prev = alpha, f, d
        alpha *= 2.0
    if bracket is None:
        return None, f0, None, evals

    lo, f_lo, d_lo, hi, f_hi, d_hi = bracket
    for _ in range(max_iter):
        alpha = _cubic_min(lo, f_lo, d_lo, hi, f_hi, d_hi)
        width = abs(hi - lo)
        if not np.isfinite(alpha) or alpha <= min(lo, hi) + 0.1 * width \
                or alpha >= max(lo, hi) - 0.1 * width:
            alpha = 0.5 * (lo + hi)
        f, d, aux = phi(alpha)
        if f > f0 + c1 * alpha * d0 or f >= f_lo:
            hi, f_hi, d_hi = alpha, f, d
        else:
            if abs(d) <= -c2 * d0:
                return alpha, f, aux, evals
            if d * (hi - lo) >= 0:
                hi, f_hi, d_hi = lo, f_lo, d_lo
            lo, f_lo, d_lo = alpha, f, d
        if abs(hi - lo) < 1e-16:
            break
    return None, f0, None, evals


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------


def _mse_vs_reference(model, reference, max_points: int = 2048):
    """Per-species MSE of the model on the reference grid (subsampled)."""
    preds_a, refs_a, preds_s, refs_s = [], [], [], []
    total = reference.c_a.size
    stride = max(1, int(np.ceil(total / max_points)))
    for ti, t in enumerate(reference.times):
        pts = reference.grid_points(float(t))[::stride]
        pa, ps = model.predict(pts)
        preds_a.append(pa)
        preds_s.append(ps)
        refs_a.append(reference.c_a[ti].ravel()[::stride])
        refs_s.append(reference.c_s[ti].ravel()[::stride])
    da = np.concatenate(preds_a) - np.concatenate(refs_a)
    ds = np.concatenate(preds_s) - np.concatenate(refs_s)
    return float(np.mean(da**2)), float(np.mean(ds**2))


def train(model, config: TrainConfig, colloc: physics.CollocationSet,
          beta: physics.RDParams, ic, sources=None, reference=None,
          counter: EvalCounter | None = None, record_timing: bool = False,
          start_epoch: int = 0, history: TrainHistory | None = None,
          opt_state=None, log=None):
    """Run the training cycle; returns (best_params, history, opt_state).

    ``model`` is a hybrid ModelSpec or a PinnBaseline; both expose get/set
    params and loss_grad against the identical physics loss.
    """
    theta = model.get_params()
    history = history if history is not None else TrainHistory()
    counter = counter if counter is not None else EvalCounter()
    if hasattr(model, "eval_counter"):
        model.eval_counter = counter

    def objective(th):
        model.set_params(th)
        breakdown, grad = model.loss_grad(colloc, beta, ic, sources=sources,
                                          reduction=config.reduction)
        if not np.isfinite(breakdown.total):
            raise FloatingPointError(
                f"non-finite loss at epoch {len(history)}: "
                f"pde={breakdown.l_pde:.3g} bc={breakdown.l_bc} "
                f"ic={breakdown.l_ic:.3g}")
        return breakdown, grad

    if config.optimizer == "adam":
        opt_state = opt_state if opt_state is not None else AdamState.fresh(theta.size)
    else:
        opt_state = opt_state if opt_state is not None else LbfgsState(
            config.lbfgs.history)

    best = (np.inf, theta.copy())
    t_start = time.perf_counter()
    breakdown, grad = objective(theta)

    for epoch in range(start_epoch, start_epoch + config.epochs):
        if config.optimizer == "adam":
            rec_breakdown = breakdown
            theta_rec = theta.copy()
            theta = adam_step(theta, grad, opt_state, config.adam)
            breakdown, grad = objective(theta)
        else:
            f0 = breakdown.total
            g0 = grad
            direction = opt_state.direction(g0)
            aux_box = {}

            def line_fun(alpha, _d=direction, _t=theta):
                b, g = objective(_t + alpha * _d)
                aux_box["breakdown"], aux_box["grad"] = b, g
                return b.total, float(g @ _d), (b, g)

            alpha, f_new, aux, _ = strong_wolfe(
                line_fun, theta, f0, g0, direction,
                c1=config.lbfgs.c1, c2=config.lbfgs.c2,
                max_iter=config.lbfgs.max_ls)
            if alpha is None:
                history.events.append((epoch, "line-search failure; gradient step"))
                if log:
                    log(f"epoch {epoch}: line-search failure, gradient fallback")
                theta_new = theta - config.lbfgs.fallback_lr * g0
                b_new, g_new = objective(theta_new)
            else:
                theta_new = theta + alpha * direction
                b_new, g_new = aux
            opt_state.push(theta_new - theta, g_new - g0)
            theta = theta_new
            breakdown, grad = b_new, g_new
            rec_breakdown = breakdown
            theta_rec = theta.copy()

        mse_a = mse_s = np.nan
        if reference is not None and (epoch + 1) % max(1, config.mse_every) == 0:
            model.set_params(theta_rec)
            mse_a, mse_s = _mse_vs_reference(model, reference)
            model.set_params(theta)
        wall_ms = (time.perf_counter() - t_start) * 1e3 if record_timing else 0.0
        history.append(
            epoch=epoch, total=rec_breakdown.total, l_pde=rec_breakdown.l_pde,
            l_A=rec_breakdown.l_a, l_S=rec_breakdown.l_s,
            l_bc=float(sum(w * s for w, s in zip(colloc.lambda_bc,
                                                 rec_breakdown.l_bc))),
            l_ic=rec_breakdown.l_ic, mse_A=mse_a, mse_S=mse_s,
            wall_ms=wall_ms, circuit_evals=counter.n)
        if rec_breakdown.total < best[0]:
            best = (rec_breakdown.total, theta_rec.copy())
        if log and (epoch % 10 == 0 or epoch == start_epoch + config.epochs - 1):
            log(f"epoch {epoch}: total={rec_breakdown.total:.6e}")
        if rec_breakdown.total < config.tolerance:
            if log:
                log(f"epoch {epoch}: tolerance reached")
            break

    model.set_params(best[1])
    return best[1], history, opt_state


# ---------------------------------------------------------------------------
# Checkpointing
# ---------------------------------------------------------------------------


def checkpoint(path, model, config: TrainConfig, history: TrainHistory,
               run_config: dict | None = None, epoch: int | None = None,
               opt_state=None) -> None:
    """Serialize parameters, config echo, epoch counter, and history to NPZ."""
    arrays = {"params": model.get_params()}
    meta = {
        "version": CHECKPOINT_VERSION,
        "epoch": int(epoch if epoch is not None else len(history)),
        "model_kind": "pinn" if isinstance(model, PinnBaseline) else "hybrid",
        "train_config": asdict(config),
        "run_config": run_config or {},
        "events": [list(e) for e in history.events],
    }
    if meta["model_kind"] == "hybrid":
        meta["n_qubits"] = model.ansatz.n_qubits
        meta["n_layers"] = model.ansatz.n_layers
        meta["embedding_variant"] = model.embedding.variant
        meta["n_emb_params"] = model.embedding.n_params
    for col in HISTORY_COLUMNS:
        if len(history):
            arrays[f"history_{col}"] = history.column(col)
        else:
            arrays[f"history_{col}"] = np.array([])
    if isinstance(opt_state, AdamState):
        arrays["adam_m"] = opt_state.m
        arrays["adam_v"] = opt_state.v
        meta["adam_t"] = opt_state.t
    elif isinstance(opt_state, LbfgsState):
        if opt_state.s:
            arrays["lbfgs_s"] = np.stack(opt_state.s)
            arrays["lbfgs_y"] = np.stack(opt_state.y)
    arrays["meta_json"] = np.frombuffer(
        json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    np.savez(path, **arrays)


def restore(path, model, config: TrainConfig):
    """Load a checkpoint into ``model``; returns (epoch, history, opt_state).

    The stored model shape must match; mismatches raise naming both values.
    """
    with np.load(path, allow_pickle=False) as data:
        meta = json.loads(bytes(data["meta_json"]).decode())
        if meta["version"] != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {meta['version']} != {CHECKPOINT_VERSION}")
        kind = "pinn" if isinstance(model, PinnBaseline) else "hybrid"
        if meta["model_kind"] != kind:
            raise CheckpointError(
                f"checkpoint holds a {meta['model_kind']} model, got {kind}")
        if kind == "hybrid":
            for key, actual in (("n_qubits", model.ansatz.n_qubits),
                                ("n_layers", model.ansatz.n_layers),
                                ("embedding_variant", model.embedding.variant),
                                ("n_emb_params", model.embedding.n_params)):
                if meta[key] != actual:
                    raise CheckpointError(
                        f"checkpoint {key}={meta[key]!r} does not match "
                        f"model {key}={actual!r}")
        params = data["params"]
        if params.shape != (model.n_params,):
            raise CheckpointError(
                f"checkpoint has {params.size} parameters, model expects "
                f"{model.n_params}")
        model.set_params(params)
        history = TrainHistory()
        n_rows = len(data["history_epoch"])
        for i in range(n_rows):
            history.append(**{col: data[f"history_{col}"][i].item()
                              for col in HISTORY_COLUMNS})
        history.events = [tuple(e) for e in meta.get("events", [])]
        opt_state = None
        if "adam_m" in data:
            opt_state = AdamState(data["adam_m"].copy(), data["adam_v"].copy(),
                                  meta["adam_t"])
        elif "lbfgs_s" in data:
            opt_state = LbfgsState(config.lbfgs.history)
            opt_state.s = list(data["lbfgs_s"])
            opt_state.y = list(data["lbfgs_y"])
        return meta["epoch"], history, opt_state
