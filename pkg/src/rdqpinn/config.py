"""Run configuration: YAML schema, strict validation, and object factories.

A run config is one YAML document. Validation is strict: unknown keys are
rejected with their full path, every default lands in the resolved document
(so the config echo written next to the outputs lists every value actually
used), and enum/range checks run before any computation starts.
"""

from __future__ import annotations

import copy

import numpy as np
import yaml

from . import circuits, embedding as emb, physics, train as tr
from .errors import ConfigurationError

VARIANTS = ("pinn", "fnn-te-qpinn", "qnn-te-qpinn")
SWEEP_AXES = ("qubits", "layers", "epochs")

# Leaves are (type_tag, default); type tags: int, float, str, bool, list.
SCHEMA = {
    "seed": ("int", 0),
    "problem": {
        "dimension": ("int", 1),
        "x_bounds": ("list", [-1.0, 1.0]),
        "y_bounds": ("list", [-1.0, 1.0]),
        "t_max": ("float", 1.0),
        "beta": {
            "d_a": ("float", 1e-5),
            "d_s": ("float", 2e-3),
            "kappa1": ("float", 1.0),
            "kappa2": ("float", 1.0),
            "kappa3": ("float", 1e-3),
        },
        "initial_condition": {
            "kind": ("str", "double_bump"),
            "baseline": ("float", 0.1),
            "amplitude": ("float", 0.5),
            "width": ("float", 0.15),
            "centers": ("list", [-0.4, 0.4]),
            "substrate": ("float", 1.0),
            "seed": ("int", 0),
        },
    },
    "model": {
        "variant": ("str", "fnn-te-qpinn"),
        "n_qubits": ("int", 2),
        "n_layers": ("int", 5),
        "fnn": {"hidden_layers": ("int", 2), "neurons": ("int", 10)},
        "qnn_embedding_layers": ("str", "match"),
        "pinn": {"hidden_layers": ("int", 4), "neurons": ("int", 32)},
        "gating": ("str", "auto"),
        "output_scale": ("list", [1.0, 1.0]),
        "output_offset": ("list", [0.0, 0.0]),
    },
    "training": {
        "epochs": ("int", 100),
        "optimizer": ("str", "lbfgs"),
        "adam": {
            "lr": ("float", 1e-2),
            "beta1": ("float", 0.9),
            "beta2": ("float", 0.999),
            "eps": ("float", 1e-8),
        },
        "lbfgs": {
            "history": ("int", 10),
            "c1": ("float", 1e-4),
            "c2": ("float", 0.9),
            "max_ls": ("int", 25),
            "fallback_lr": ("float", 1e-2),
        },
        "tolerance": ("float", 1e-9),
        "reduction": ("str", "sum"),
        "collocation": {
            "mode": ("str", "grid"),
            "interior": ("list", None),
            "boundary": ("int", 32),
            "initial": ("int", 64),
        },
        "weights": {"bc": ("float", 1.0), "ic": ("float", 1.0)},
        "mse_every": ("int", 1),
        "reference_mse": ("bool", True),
        "seeds": ("list", None),
    },
    "reference": {
        "nodes": ("list", None),
        "rtol": ("float", 1e-8),
        "atol": ("float", 1e-10),
        "snapshots": ("list", None),
    },
    "outputs": {
        "dir": ("str", "runs/out"),
        "figures": ("bool", True),
        "record_timing": ("bool", False),
    },
    "sweep": {
        "axis": ("str", "qubits"),
        "values": ("list", [2, 4]),
        "variants": ("list", None),
    },
}


def _coerce(value, tag, path):
    if tag == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigurationError(f"{path}: expected integer, got {value!r}")
        return value
    if tag == "float":
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{path}: expected number, got {value!r}")
        return float(value)
    if tag == "str":
        if not isinstance(value, (str, int)):
            raise ConfigurationError(f"{path}: expected string, got {value!r}")
        return value if isinstance(value, str) else value
    if tag == "bool":
        if not isinstance(value, bool):
            raise ConfigurationError(f"{path}: expected boolean, got {value!r}")
        return value
    if tag == "list":
        if value is not None and not isinstance(value, list):
            raise ConfigurationError(f"{path}: expected list, got {value!r}")
        return value
    raise ConfigurationError(f"{path}: unknown schema tag {tag}")


def _resolve(raw, schema, path=""):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path or 'config'}: expected a mapping")
    for key in raw:
        if key not in schema:
            raise ConfigurationError(f"unknown config key {path + key!r}")
    out = {}
    for key, spec in schema.items():
        sub_path = f"{path}{key}"
        if isinstance(spec, dict):
            out[key] = _resolve(raw.get(key), spec, sub_path + ".")
        else:
            tag, default = spec
            if key in raw:
                out[key] = _coerce(raw[key], tag, sub_path)
            else:
                out[key] = copy.deepcopy(default)
    return out


def _post_validate(cfg: dict) -> dict:
    dim = cfg["problem"]["dimension"]
    if dim not in (1, 2):
        raise ConfigurationError(f"problem.dimension must be 1 or 2, got {dim}")
    for name in ("x_bounds", "y_bounds"):
        b = cfg["problem"][name]
        if len(b) != 2 or not float(b[0]) < float(b[1]):
            raise ConfigurationError(f"problem.{name} must be [lo, hi]")
    ic_kind = cfg["problem"]["initial_condition"]["kind"]
    if ic_kind not in physics.InitialCondition.KINDS:
        raise ConfigurationError(f"unknown initial condition kind {ic_kind!r}")
    variant = cfg["model"]["variant"]
    if variant not in VARIANTS:
        raise ConfigurationError(
            f"model.variant must be one of {VARIANTS}, got {variant!r}")
    if cfg["model"]["gating"] not in ("auto", "none"):
        raise ConfigurationError("model.gating must be 'auto' or 'none'")
    qel = cfg["model"]["qnn_embedding_layers"]
    if not (qel == "match" or (isinstance(qel, int) and qel >= 1)):
        raise ConfigurationError(
            "model.qnn_embedding_layers must be 'match' or a positive integer")
    if cfg["training"]["optimizer"] not in ("lbfgs", "adam"):
        raise ConfigurationError("training.optimizer must be 'lbfgs' or 'adam'")
    if cfg["training"]["reduction"] not in ("sum", "mean"):
        raise ConfigurationError("training.reduction must be 'sum' or 'mean'")
    if cfg["training"]["collocation"]["mode"] not in ("grid", "lhs"):
        raise ConfigurationError("collocation.mode must be 'grid' or 'lhs'")
    if cfg["training"]["epochs"] < 1:
        raise ConfigurationError("training.epochs must be >= 1")
    if variant != "pinn":
        nq, nl = cfg["model"]["n_qubits"], cfg["model"]["n_layers"]
        if not 2 <= nq <= 8:
            raise ConfigurationError(f"model.n_qubits must be in 2..8, got {nq}")
        if not 5 <= nl <= 20:
            raise ConfigurationError(f"model.n_layers must be in 5..20, got {nl}")
    if cfg["sweep"]["axis"] not in SWEEP_AXES:
        raise ConfigurationError(f"sweep.axis must be one of {SWEEP_AXES}")

    # dimension-dependent defaults land explicitly in the resolved document
    colloc = cfg["training"]["collocation"]
    if colloc["interior"] is None:
        colloc["interior"] = [32, 32] if dim == 1 else [16, 16, 8]
    if len(colloc["interior"]) != dim + 1:
        raise ConfigurationError(
            f"collocation.interior needs {dim + 1} entries for {dim}D")
    ref = cfg["reference"]
    if ref["nodes"] is None:
        ref["nodes"] = [512] if dim == 1 else [128, 128]
    if len(ref["nodes"]) != dim:
        raise ConfigurationError(f"reference.nodes needs {dim} entries")
    if ref["snapshots"] is None:
        t_max = cfg["problem"]["t_max"]
        if dim == 1:
            ref["snapshots"] = [t_max * i / 20 for i in range(21)]
        else:
            ref["snapshots"] = [0.0, 0.330, 0.5, 0.665, 1.0]
    if cfg["sweep"]["variants"] is None:
        cfg["sweep"]["variants"] = (
            ["pinn", "fnn-te-qpinn", "qnn-te-qpinn"]
            if cfg["sweep"]["axis"] == "epochs"
            else ["fnn-te-qpinn", "qnn-te-qpinn"])
    for v in cfg["sweep"]["variants"]:
        if v not in VARIANTS:
            raise ConfigurationError(f"sweep variant {v!r} unknown")
    return cfg


def resolve_config(raw: dict | None) -> dict:
    """Validate a raw config mapping and fill every default explicitly."""
    return _post_validate(_resolve(raw, SCHEMA))


def load_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return resolve_config(raw)


def dump_config(cfg: dict, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(cfg, fh, sort_keys=True)


# ---------------------------------------------------------------------------
# Factories
# ---------------------------------------------------------------------------


def spatial_bounds(cfg: dict) -> list[tuple[float, float]]:
    p = cfg["problem"]
    bounds = [tuple(map(float, p["x_bounds"]))]
    if p["dimension"] == 2:
        bounds.append(tuple(map(float, p["y_bounds"])))
    return bounds


def make_beta(cfg: dict) -> physics.RDParams:
    b = cfg["problem"]["beta"]
    return physics.RDParams(b["d_a"], b["d_s"], b["kappa1"], b["kappa2"],
                            b["kappa3"]).validate_physical()


def make_initial_condition(cfg: dict) -> physics.InitialCondition:
    ic = cfg["problem"]["initial_condition"]
    return physics.InitialCondition(
        kind=ic["kind"], baseline=ic["baseline"], amplitude=ic["amplitude"],
        width=ic["width"], centers=tuple(ic["centers"]),
        substrate=ic["substrate"], seed=ic["seed"])


def make_normalization(cfg: dict) -> emb.NormalizationSpec:
    bounds = spatial_bounds(cfg) + [(0.0, float(cfg["problem"]["t_max"]))]
    return emb.NormalizationSpec(tuple(bounds))


def make_collocation(cfg: dict, seed: int) -> physics.CollocationSet:
    t_cfg = cfg["training"]
    colloc = t_cfg["collocation"]
    bounds = spatial_bounds(cfg)
    n_seg = len(bounds)
    return physics.sample_collocation(
        bounds, float(cfg["problem"]["t_max"]),
        {"interior": colloc["interior"], "boundary": colloc["boundary"],
         "initial": colloc["initial"]},
        seed=seed, mode=colloc["mode"],
        lambda_bc=(t_cfg["weights"]["bc"],) * n_seg,
        lambda_ic=t_cfg["weights"]["ic"])


def make_model(cfg: dict, seed: int):
    """Build the configured model; rng order: embedding init, then ansatz."""
    rng = np.random.default_rng(seed)
    norm = make_normalization(cfg)
    m = cfg["model"]
    variant = m["variant"]
    if variant == "pinn":
        return tr.PinnBaseline(norm, rng, neurons=m["pinn"]["neurons"],
                               hidden_layers=m["pinn"]["hidden_layers"])
    n_qubits, n_layers = m["n_qubits"], m["n_layers"]
    n_coords = norm.n_coords
    gating = (emb.default_gating(n_qubits) if m["gating"] == "auto"
              else ("none",) * n_qubits)
    ansatz = circuits.AnsatzSpec(n_qubits, n_layers)
    if variant == "fnn-te-qpinn":
        fnn = emb.FnnEmbedding.create(n_qubits, n_coords,
                                      m["fnn"]["hidden_layers"],
                                      m["fnn"]["neurons"], rng)
        spec = emb.EmbeddingSpec("fnn", norm, fnn=fnn, gating=gating)
    else:
        qel = m["qnn_embedding_layers"]
        emb_layers = (emb.match_layer_count(ansatz.n_params, n_qubits)
                      if qel == "match" else int(qel))
        qnn = emb.QnnEmbedding.create(n_qubits, n_coords, emb_layers, rng)
        spec = emb.EmbeddingSpec("qnn", norm, qnn=qnn, gating=gating)
    theta_var = rng.uniform(-0.1, 0.1, size=ansatz.n_params)
    return circuits.ModelSpec(
        ansatz, theta_var, spec, circuits.default_partition(n_qubits),
        output_scale=tuple(map(float, m["output_scale"])),
        output_offset=tuple(map(float, m["output_offset"])))


def make_train_config(cfg: dict, seed: int) -> tr.TrainConfig:
    t = cfg["training"]
    return tr.TrainConfig(
        epochs=t["epochs"], optimizer=t["optimizer"],
        adam=tr.AdamConfig(**t["adam"]), lbfgs=tr.LbfgsConfig(**t["lbfgs"]),
        seed=seed, tolerance=t["tolerance"], reduction=t["reduction"],
        n_qubits=cfg["model"]["n_qubits"], n_layers=cfg["model"]["n_layers"],
        mse_every=t["mse_every"])
