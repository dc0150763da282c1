"""Command-line front end: reference solves, training, inference, sweeps.

Every command reads one YAML config (see README for the schema), writes its
delimited outputs plus rendered figures into the output directory, and echoes
the fully-resolved config so a run is reproducible from its artifacts alone.
Floats in CSVs are printed with 17 significant digits. On failure a single
machine-readable JSON line goes to stderr and the exit code is nonzero.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import copy
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import config as cfgmod, metrics, physics, plots, reference as refmod, train as tr
from .errors import ConfigurationError
from .reference import GridSolution
from .train import HISTORY_COLUMNS, EvalCounter, TrainHistory


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def write_csv(path, header, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(_fmt(v) if not isinstance(v, str) else v
                              for v in row) + "\n")


def write_fields_csv(path, sol: GridSolution) -> None:
    """Long-format field dump: x[,y],t,c_A,c_S; one block per snapshot."""
    header = (["x", "t", "c_A", "c_S"] if sol.dim == 1
              else ["x", "y", "t", "c_A", "c_S"])
    rows = []
    for ti, t in enumerate(sol.times):
        pts = sol.grid_points(float(t))
        ca = sol.c_a[ti].ravel()
        cs = sol.c_s[ti].ravel()
        for i in range(len(pts)):
            rows.append(tuple(pts[i]) + (ca[i], cs[i]))
    write_csv(path, header, rows)


def _out_dir(cfg, override) -> Path:
    out = Path(override) if override else Path(cfg["outputs"]["dir"])
    out.mkdir(parents=True, exist_ok=True)
    return out


def _solve_reference(cfg) -> GridSolution:
    return refmod.solve_reference(
        cfgmod.spatial_bounds(cfg), tuple(cfg["reference"]["nodes"]),
        cfgmod.make_beta(cfg), cfgmod.make_initial_condition(cfg),
        cfg["reference"]["snapshots"], rtol=cfg["reference"]["rtol"],
        atol=cfg["reference"]["atol"])


def _meta_sidecar(path, cfg, extra: dict) -> None:
    meta = {"beta": cfg["problem"]["beta"],
            "initial_condition": cfg["problem"]["initial_condition"],
            "rtol": cfg["reference"]["rtol"], "atol": cfg["reference"]["atol"],
            **extra}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True, default=str)


def cmd_reference(cfg, out: Path) -> int:
    sol = _solve_reference(cfg)
    write_fields_csv(out / "reference.csv", sol)
    _meta_sidecar(out / "reference_meta.json", cfg,
                  {"solver_stats": {k: v for k, v in sol.metadata.items()
                                    if k in ("steps", "rejected")}})
    cfgmod.dump_config(cfg, out / "resolved_config.yaml")
    if cfg["outputs"]["figures"]:
        plots.solution_figure(sol, out / "reference_fields.png",
                              title="reference solution")
    print(f"reference: {len(sol.times)} snapshots -> {out / 'reference.csv'}")
    return 0


def _history_rows(history: TrainHistory):
    return [tuple(rec[c] for c in HISTORY_COLUMNS) for rec in history.records]


def _run_training(cfg, seed: int, out: Path, tag: str = "") -> dict:
    beta = cfgmod.make_beta(cfg)
    ic = cfgmod.make_initial_condition(cfg)
    colloc = cfgmod.make_collocation(cfg, seed)
    model = cfgmod.make_model(cfg, seed)
    train_cfg = cfgmod.make_train_config(cfg, seed)
    ref = _solve_reference(cfg) if cfg["training"]["reference_mse"] else None
    counter = EvalCounter()
    t0 = time.perf_counter()
    best, history, opt_state = tr.train(
        model, train_cfg, colloc, beta, ic, reference=ref, counter=counter,
        record_timing=cfg["outputs"]["record_timing"],
        log=lambda msg: print(f"[{tag or 'train'}] {msg}"))
    wall_s = time.perf_counter() - t0
    suffix = f"_{tag}" if tag else ""
    write_csv(out / f"history{suffix}.csv", HISTORY_COLUMNS,
              _history_rows(history))
    tr.checkpoint(out / f"checkpoint{suffix}.npz", model, train_cfg, history,
                  run_config=cfg, epoch=len(history), opt_state=opt_state)
    with open(out / f"run_meta{suffix}.json", "w", encoding="utf-8") as fh:
        json.dump({"seed": seed, "wall_seconds": wall_s,
                   "circuit_evals": counter.n,
                   "final_total": history.records[-1]["total"],
                   "best_total": min(r["total"] for r in history.records),
                   "events": [list(e) for e in history.events]},
                  fh, indent=2)
    if cfg["outputs"]["figures"]:
        plots.training_curves(history.records,
                              out / f"training_curves{suffix}.png",
                              title=cfg["model"]["variant"])
    return {"seed": seed, "final_total": history.records[-1]["total"],
            "best_total": min(r["total"] for r in history.records)}


def cmd_train(cfg, out: Path) -> int:
    cfgmod.dump_config(cfg, out / "resolved_config.yaml")
    seeds = cfg["training"]["seeds"]
    if seeds:
        for s in seeds:
            _run_training(cfg, int(s), out, tag=f"seed{int(s)}")
    else:
        _run_training(cfg, cfg["seed"], out)
    print(f"train: outputs in {out}")
    return 0


def _predict_on_grid(model, ref: GridSolution) -> GridSolution:
    shape = ref.c_a.shape[1:]
    preds_a, preds_s = [], []
    for t in ref.times:
        pa, ps = model.predict(ref.grid_points(float(t)))
        preds_a.append(pa.reshape(shape))
        preds_s.append(ps.reshape(shape))
    return GridSolution(x=ref.x, times=ref.times, c_a=np.stack(preds_a),
                        c_s=np.stack(preds_s), y=ref.y,
                        metadata={"kind": "prediction"})


def cmd_infer(cfg, out: Path, checkpoint_path, with_reference: bool = True) -> int:
    cfgmod.dump_config(cfg, out / "resolved_config.yaml")
    model = cfgmod.make_model(cfg, cfg["seed"])
    train_cfg = cfgmod.make_train_config(cfg, cfg["seed"])
    tr.restore(checkpoint_path, model, train_cfg)
    ref = _solve_reference(cfg)
    pred = _predict_on_grid(model, ref)
    write_fields_csv(out / "prediction.csv", pred)
    if cfg["outputs"]["figures"]:
        plots.solution_figure(pred, out / "prediction_fields.png",
                              title=f"{cfg['model']['variant']} prediction")
    if with_reference:
        report = metrics.compare(pred, ref)
        variant = cfg["model"]["variant"]
        rows = [(variant, sp, met, val) for sp, met, val in report.rows()]
        write_csv(out / "error_report.csv",
                  ("variant", "species", "metric", "value"), rows)
        if cfg["outputs"]["figures"]:
            plots.error_figure(pred, report, out / "abs_error.png")
            plots.metrics_bars(rows, out / "metrics_summary.png")
        print(f"infer: rel_l2 A={report.a.rel_l2:.4g} S={report.s.rel_l2:.4g}")
    return 0


def _sweep_value_config(cfg, axis: str, value: int, variant: str) -> dict:
    run_cfg = copy.deepcopy(cfg)
    run_cfg["model"]["variant"] = variant
    if axis == "qubits":
        run_cfg["model"]["n_qubits"] = int(value)
    elif axis == "layers":
        run_cfg["model"]["n_layers"] = int(value)
    else:
        run_cfg["training"]["epochs"] = int(value)
    return cfgmod.resolve_config(run_cfg)


def _sweep_one(args):
    cfg, axis, value, variant, out = args
    tag = f"{axis}{value}_{variant}"
    try:
        run_cfg = _sweep_value_config(cfg, axis, value, variant)
        run_dir = out / tag
        run_dir.mkdir(parents=True, exist_ok=True)
        cfgmod.dump_config(run_cfg, run_dir / "resolved_config.yaml")
        result = _run_training(run_cfg, run_cfg["seed"], run_dir, tag="")
        return {"axis": axis, "value": value, "variant": variant,
                "final_total": result["final_total"], "status": "ok"}
    except Exception as exc:  # per-run failures become rows, sweep continues
        return {"axis": axis, "value": value, "variant": variant,
                "final_total": float("nan"), "status": f"failed: {exc}"}


def cmd_sweep(cfg, out: Path, threads: int = 1) -> int:
    axis = cfg["sweep"]["axis"]
    values = cfg["sweep"]["values"]
    for v in values:
        if axis == "qubits" and not 2 <= int(v) <= 8:
            raise ConfigurationError(f"qubit sweep value {v} outside 2..8")
        if axis == "layers" and not 5 <= int(v) <= 20:
            raise ConfigurationError(f"layer sweep value {v} outside 5..20")
        if axis == "epochs" and int(v) < 1:
            raise ConfigurationError(f"epoch sweep value {v} must be >= 1")
    cfgmod.dump_config(cfg, out / "resolved_config.yaml")
    variants = cfg["sweep"]["variants"]
    jobs = [(cfg, axis, int(v), variant, out)
            for v in values for variant in variants
            if not (axis in ("qubits", "layers") and variant == "pinn")]
    if threads > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=threads) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    write_csv(out / "sweep.csv", ("axis", "value", "variant", "final_total",
                                  "status"),
              [(r["axis"], r["value"], r["variant"], r["final_total"],
                r["status"]) for r in rows])
    if cfg["outputs"]["figures"]:
        plots.sweep_figure(rows, axis, out / "sweep.png")
    print(f"sweep: {len(rows)} runs -> {out / 'sweep.csv'}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rdqpinn",
        description="Hybrid quantum-classical reaction-diffusion solver")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("reference", "solve the ground-truth RD system"),
                        ("train", "train a model against the physics loss"),
                        ("infer", "evaluate a checkpoint on the reference grid"),
                        ("sweep", "train across a hyperparameter axis")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True, help="YAML run config")
        p.add_argument("--seed", type=int, default=None, help="seed override")
        p.add_argument("--out", default=None, help="output directory override")
        p.add_argument("--threads", type=int, default=1,
                       help="worker pool bound for sweeps")
        if name == "infer":
            p.add_argument("--checkpoint", required=True)
            p.add_argument("--no-reference", action="store_true",
                           help="skip the reference solve and error report")
        if name == "sweep":
            p.add_argument("--axis", default=None,
                           choices=list(cfgmod.SWEEP_AXES))
            p.add_argument("--values", default=None,
                           help="comma-separated sweep values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = cfgmod.load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if getattr(args, "axis", None):
            cfg["sweep"]["axis"] = args.axis
            cfg = cfgmod.resolve_config(cfg)
        if getattr(args, "values", None):
            cfg["sweep"]["values"] = [int(v) for v in args.values.split(",")]
        out = _out_dir(cfg, args.out)
        if args.command == "reference":
            return cmd_reference(cfg, out)
        if args.command == "train":
            return cmd_train(cfg, out)
        if args.command == "infer":
            return cmd_infer(cfg, out, args.checkpoint,
                             with_reference=not args.no_reference)
        return cmd_sweep(cfg, out, threads=args.threads)
    except Exception as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
