"""Command-line interface: dataset generation, training, evaluation,
equation extraction, prediction, and bifurcation sweeps.

Every command writes its outputs into one directory containing a
``manifest.json`` that echoes the fully resolved configuration, the seeds,
and the tool version, so runs are reproducible bit-for-bit.  Exit codes:
0 success, 1 usage/configuration error, 2 runtime failure.  The
``SYMODE_OUT`` environment variable sets the default output root.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dataset import load_dataset, read_array, save_dataset
from .grf import ParamFunction, constant_param
from .integrate import SolveConfig, ode_solve
from .model import ModelBundle, ModelRHS, load_model, save_model
from .presets import PROFILES, preset
from .spectral import Grid, fourier_resample
from .symnet import extract_equation, format_equation
from .systems import (
    Dataset,
    GenConfig,
    IcSampler,
    ParamSampler,
    SYSTEM_IDS,
    forcing_field,
    generate_dataset,
    make_system,
)
from .training import TrainConfig, evaluate_mse, model_rhs_factory, train_pipeline

ENV_OUT_ROOT = "SYMODE_OUT"


class ConfigError(Exception):
    """Configuration problem: unknown key, bad type, or unparseable file."""


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 on usage errors, not argparse's 2
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ── configuration files ─────────────────────────────────────────────

_PARAM_KEYS = {
    "mean": float,
    "length_scale_range": list,
    "output_scale_range": list,
    "n_knots": int,
    "constant": float,
}
_IC_KEYS = {"kind": str, "low": float, "high": float, "max_mode": int, "zero_mean": bool}
_GEN_KEYS = {
    "n_traj": int,
    "n_times": int,
    "t_span": list,
    "grid_points": list,
    "param": dict,
    "ic": dict,
    "internal_dt": float,
    "rtol": float,
    "atol": float,
    "noise": float,
}
_TRAIN_KEYS = {name: object for name in TrainConfig.__dataclass_fields__}
_SOLVE_KEYS = {name: object for name in SolveConfig.__dataclass_fields__}
_COEFF_KEYS = {"theta1": float, "theta2": float, "diffusion": float,
               "reaction": float, "viscosity": float}
_TOP_KEYS = {
    "system": str,
    "profile": str,
    "seed": int,
    "gen": dict,
    "train": dict,
    "solve": dict,
    "coeffs": dict,
}


def _check_keys(section: dict, allowed: dict, where: str) -> None:
    for key, value in section.items():
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} in {where}")
        expected = allowed[key]
        if expected is object or value is None:
            continue
        if expected is float and isinstance(value, (int, float)) and not isinstance(value, bool):
            continue
        if expected is int and isinstance(value, int) and not isinstance(value, bool):
            continue
        if not isinstance(value, expected):
            raise ConfigError(
                f"key {key!r} in {where} expects {expected.__name__}, "
                f"got {type(value).__name__}"
            )


def validate_config(doc: dict) -> None:
    if not isinstance(doc, dict):
        raise ConfigError("configuration root must be an object")
    _check_keys(doc, _TOP_KEYS, "top level")
    if "gen" in doc:
        _check_keys(doc["gen"], _GEN_KEYS, "gen")
        if "param" in doc["gen"]:
            _check_keys(doc["gen"]["param"], _PARAM_KEYS, "gen.param")
        if "ic" in doc["gen"]:
            _check_keys(doc["gen"]["ic"], _IC_KEYS, "gen.ic")
    if "train" in doc:
        _check_keys(doc["train"], _TRAIN_KEYS, "train")
    if "solve" in doc:
        _check_keys(doc["solve"], _SOLVE_KEYS, "solve")
    if "coeffs" in doc:
        _check_keys(doc["coeffs"], _COEFF_KEYS, "coeffs")


def load_config(path: str | Path) -> dict:
    """Parse and validate a JSON configuration file."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"configuration file {path} does not exist")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(
            f"{path}: parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from exc
    validate_config(doc)
    return doc


def _deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def resolve_config(args) -> dict:
    """Merge preset defaults, the optional config file, and CLI overrides
    into one fully resolved configuration."""
    file_cfg = load_config(args.config) if getattr(args, "config", None) else {}
    system = getattr(args, "system", None) or file_cfg.get("system")
    if system is None:
        raise ConfigError("no system selected (use --system or a config file)")
    if system not in SYSTEM_IDS:
        raise ConfigError(f"unknown system {system!r}; choose from {SYSTEM_IDS}")
    profile = getattr(args, "profile", None) or file_cfg.get("profile", "desk")
    if profile not in PROFILES:
        raise ConfigError(f"unknown profile {profile!r}; choose from {PROFILES}")
    cfg = preset(system, profile)
    cfg.setdefault("solve", {})
    cfg.setdefault("coeffs", {})
    cfg.setdefault("seed", 0)
    cfg = _deep_merge(cfg, file_cfg)
    if getattr(args, "seed", None) is not None:
        cfg["seed"] = args.seed
    if getattr(args, "n_traj", None) is not None:
        cfg["gen"]["n_traj"] = args.n_traj
    if getattr(args, "noise", None) is not None:
        cfg["gen"]["noise"] = args.noise
    if getattr(args, "stages", None) is not None:
        cfg["stages"] = args.stages
    validate_config({k: v for k, v in cfg.items() if k in _TOP_KEYS})
    return cfg


def _gen_config(cfg: dict) -> GenConfig:
    gen = dict(cfg["gen"])
    param = ParamSampler(
        **{
            k: (tuple(v) if isinstance(v, list) else v)
            for k, v in gen.pop("param", {}).items()
        }
    )
    ic = IcSampler(**gen.pop("ic", {}))
    if "t_span" in gen and gen["t_span"] is not None:
        gen["t_span"] = tuple(gen["t_span"])
    if "grid_points" in gen and gen["grid_points"] is not None:
        gen["grid_points"] = tuple(gen["grid_points"])
    return GenConfig(param=param, ic=ic, **gen)


def _train_config(cfg: dict) -> TrainConfig:
    train = dict(cfg.get("train", {}))
    for key in ("lr_milestones", "mlp_hidden"):
        if key in train:
            train[key] = tuple(train[key])
    train.setdefault("seed", cfg.get("seed", 0))
    return TrainConfig(**train)


# ── output handling ─────────────────────────────────────────────────


def _default_out(command: str, cfg: dict) -> Path:
    root = Path(os.environ.get(ENV_OUT_ROOT, "runs"))
    name = f"{command}_{cfg.get('system', 'model')}_seed{cfg.get('seed', 0)}"
    return root / name


def _write_manifest(out_dir: Path, command: str, cfg: dict, extra: dict | None = None) -> None:
    doc = {"command": command, "tool_version": __version__, "config": cfg}
    if extra:
        doc.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ── commands ────────────────────────────────────────────────────────


def _cmd_gen(args) -> Path:
    cfg = resolve_config(args)
    gen = _gen_config(cfg)
    spec = make_system(cfg["system"], **cfg.get("coeffs", {}))
    out_dir = Path(args.out) if args.out else _default_out("gen", cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = generate_dataset(spec, gen, seed=cfg["seed"], threads=args.threads)
    save_dataset(ds, out_dir)
    _write_manifest(out_dir, "gen", cfg, {"n_written": len(ds.trajectories)})
    print(f"wrote {len(ds.trajectories)} trajectories to {out_dir}")
    return out_dir


def _require(path: str, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"{what} {path} does not exist")
    return p


def _cmd_train(args) -> Path:
    _require(args.data, "dataset")
    ds = load_dataset(args.data)
    args.system = ds.spec.sid
    cfg = resolve_config(args)
    stages = cfg.get("stages", "1-2-3")
    train_cfg = _train_config(cfg)
    out_dir = Path(args.out) if args.out else _default_out("train", cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    bundle, report = train_pipeline(ds, train_cfg, stages=stages)
    save_model(bundle, out_dir / "model.json")
    report.write_csv(out_dir / "losses.csv")
    report.write_text(out_dir / "report.txt")
    _write_manifest(out_dir, "train", cfg, {"stages": stages, "data": str(args.data)})
    print(f"trained stages {stages}; model at {out_dir / 'model.json'}")
    if report.equation:
        print(report.equation)
    return out_dir


def _resample_dataset(ds: Dataset, n: int) -> Dataset:
    new_grid = Grid(shape=(n,) * ds.grid.dim, lengths=ds.grid.lengths)
    trajectories = []
    for tr in ds.trajectories:
        states = np.stack(
            [
                fourier_resample(tr.states[..., c], ds.grid, new_grid)
                for c in range(tr.states.shape[-1])
            ],
            axis=-1,
        )
        trajectories.append(
            type(tr)(
                times=tr.times,
                states=states,
                param_times=tr.param_times,
                param_knots=tr.param_knots,
            )
        )
    return Dataset(spec=ds.spec, grid=new_grid, trajectories=trajectories, meta=dict(ds.meta))


def _cmd_eval(args) -> Path:
    _require(args.data, "dataset")
    _require(args.model, "model file")
    ds = load_dataset(args.data)
    bundle = load_model(args.model)
    if bundle.system_id != ds.spec.sid:
        raise RuntimeError(
            f"model was trained on {bundle.system_id!r} but dataset is {ds.spec.sid!r}"
        )
    if args.grid is not None:
        if ds.grid.dim == 0:
            raise ConfigError("--grid only applies to PDE datasets")
        ds = _resample_dataset(ds, args.grid)
    cfg = {"system": ds.spec.sid, "seed": 0, "model": str(args.model), "data": str(args.data)}
    out_dir = Path(args.out) if args.out else _default_out("eval", cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = evaluate_mse(
        model_rhs_factory(bundle), ds, solve_cfg=bundle.solve, horizon=args.horizon
    )
    lines = ["metric,value", f"mse,{metrics.mse!r}", f"normalized_mse,{metrics.normalized_mse!r}",
             f"n_blowups,{metrics.n_blowups}"]
    (out_dir / "mse.csv").write_text("\n".join(lines) + "\n")
    per = ["trajectory,mse"] + [f"{i},{m!r}" for i, m in enumerate(metrics.per_trajectory)]
    (out_dir / "per_trajectory.csv").write_text("\n".join(per) + "\n")
    _write_manifest(
        out_dir,
        "eval",
        cfg,
        {"grid": args.grid, "horizon": args.horizon, "mse": metrics.mse},
    )
    print(f"mse {metrics.mse:.6g} (normalized {metrics.normalized_mse:.6g}) -> {out_dir}")
    return out_dir


def _cmd_extract(args) -> Path | None:
    _require(args.model, "model file")
    bundle = load_model(args.model)
    channels = extract_equation(bundle.symnet, bundle.dict_spec, threshold=args.threshold)
    text = format_equation(channels)
    print(text)
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "equation.txt").write_text(text + "\n")
        rows = ["channel,coefficient,term"]
        for c, terms in enumerate(channels):
            rows.extend(f"{c},{coef!r},{label}" for coef, label in terms)
        (out_dir / "terms.csv").write_text("\n".join(rows) + "\n")
        _write_manifest(
            out_dir,
            "extract",
            {"model": str(args.model), "threshold": args.threshold, "seed": 0},
        )
        return out_dir
    return None


def _load_param_csv(path: Path) -> ParamFunction:
    rows = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if rows and rows[0].lower().replace(" ", "") in ("t,u", "time,u", "t,value"):
        rows = rows[1:]
    data = np.array([[float(tok) for tok in row.split(",")] for row in rows])
    if data.ndim != 2 or data.shape[1] != 2:
        raise ConfigError(f"{path}: expected two columns (t, u)")
    return ParamFunction(data[:, 0], data[:, 1])


def _cmd_predict(args) -> Path:
    _require(args.model, "model file")
    _require(args.state, "state file")
    _require(args.params, "parameter file")
    bundle = load_model(args.model)
    spec = make_system(bundle.system_id)
    s0 = read_array(Path(args.state))
    if spec.dim == 0:
        grid = Grid.for_ode()
    else:
        grid = Grid(shape=s0.shape[: spec.dim], lengths=spec.lengths)
    if s0.ndim == spec.dim:  # allow channel-less state files
        s0 = s0[..., None]
    t0, t1 = args.t0, args.t1
    pf = _load_param_csv(Path(args.params))
    times = np.linspace(t0, t1, args.num)
    rhs = ModelRHS(bundle, grid)
    u_eval = lambda t: forcing_field(spec, grid, np.asarray(pf(t)))
    states = ode_solve(rhs, s0, times, u=u_eval, cfg=bundle.solve)
    cfg = {"system": spec.sid, "seed": 0, "model": str(args.model)}
    out_dir = Path(args.out) if args.out else _default_out("predict", cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    flat = states.reshape(states.shape[0], -1)
    header = "t," + ",".join(f"s{i}" for i in range(flat.shape[1]))
    rows = [header] + [
        f"{times[i]!r}," + ",".join(repr(v) for v in flat[i]) for i in range(len(times))
    ]
    (out_dir / "trajectory.csv").write_text("\n".join(rows) + "\n")
    _write_manifest(out_dir, "predict", cfg, {"t0": t0, "t1": t1, "num": args.num})
    print(f"wrote trajectory to {out_dir / 'trajectory.csv'}")
    return out_dir


def _cmd_bifurcation(args) -> Path:
    _require(args.model, "model file")
    bundle = load_model(args.model)
    spec = make_system(bundle.system_id)
    if spec.dim != 0:
        raise RuntimeError("bifurcation sweeps apply to ODE systems")
    grid = Grid.for_ode()
    rhs = ModelRHS(bundle, grid)
    if args.ic is not None:
        s0 = np.array([float(tok) for tok in args.ic.split(",")])
    else:
        s0 = np.full(spec.n_state, 0.5)
    if s0.size != spec.n_state:
        raise ConfigError(f"initial state needs {spec.n_state} components")
    u_values = np.linspace(args.u_min, args.u_max, args.num)
    times = np.linspace(0.0, args.t_end, 201)
    tail = times.size // 4
    cfg = {"system": spec.sid, "seed": 0, "model": str(args.model)}
    out_dir = Path(args.out) if args.out else _default_out("bifurcation", cfg)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = ["u," + ",".join(f"s{i}_final" for i in range(spec.n_state)) + ",radius_late"]
    for u in u_values:
        pf = constant_param(float(u), (0.0, args.t_end))
        u_eval = lambda t: forcing_field(spec, grid, np.asarray(pf(t)))
        states = ode_solve(rhs, s0, times, u=u_eval, cfg=bundle.solve)
        radius = float(np.mean(np.sqrt(np.sum(states[-tail:] ** 2, axis=-1))))
        rows.append(
            f"{u!r}," + ",".join(repr(v) for v in states[-1]) + f",{radius!r}"
        )
    (out_dir / "bifurcation.csv").write_text("\n".join(rows) + "\n")
    _write_manifest(
        out_dir,
        "bifurcation",
        cfg,
        {"u_min": args.u_min, "u_max": args.u_max, "num": args.num, "t_end": args.t_end},
    )
    print(f"wrote sweep to {out_dir / 'bifurcation.csv'}")
    return out_dir


# ── entry point ─────────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="symode", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, with_seed=True):
        p.add_argument("--out", help="output directory (default: $SYMODE_OUT/<auto>)")
        p.add_argument("--threads", type=int, default=1, help="worker cap")
        if with_seed:
            p.add_argument("--seed", type=int, default=None)
        p.add_argument("--config", help="JSON configuration file")

    p = sub.add_parser("gen", help="generate a ground-truth dataset")
    p.add_argument("--system", choices=SYSTEM_IDS)
    p.add_argument("--profile", choices=PROFILES, default=None)
    p.add_argument("--n-traj", type=int, default=None)
    p.add_argument("--noise", type=float, default=None,
                   help="noise sigma relative to the mean absolute state")
    common(p)

    p = sub.add_parser("train", help="train a model on a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--stages", choices=("1", "1-2", "1-2-3", "e1", "e2"), default=None)
    common(p)

    p = sub.add_parser("eval", help="evaluate a model on a dataset")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=None,
                   help="spectrally resample the dataset to this resolution")
    p.add_argument("--horizon", type=int, default=None,
                   help="k-step segment evaluation instead of full rollouts")
    common(p)

    p = sub.add_parser("extract", help="print the symbolic equation of a model")
    p.add_argument("--model", required=True)
    p.add_argument("--threshold", type=float, default=1e-3)
    common(p)

    p = sub.add_parser("predict", help="roll out a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--state", required=True, help="initial state (.f64 + .shape)")
    p.add_argument("--params", required=True, help="parameter function CSV (t,u)")
    p.add_argument("--t0", type=float, default=0.0)
    p.add_argument("--t1", type=float, required=True)
    p.add_argument("--num", type=int, default=101)
    common(p)

    p = sub.add_parser("bifurcation", help="sweep constant forcing values")
    p.add_argument("--model", required=True)
    p.add_argument("--u-min", type=float, required=True)
    p.add_argument("--u-max", type=float, required=True)
    p.add_argument("--num", type=int, default=16)
    p.add_argument("--t-end", type=float, default=40.0)
    p.add_argument("--ic", default=None, help="comma-separated initial state")
    common(p)
    return parser


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "extract": _cmd_extract,
    "predict": _cmd_predict,
    "bifurcation": _cmd_bifurcation,
}


def run_command(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    out_dir = Path(args.out).resolve() if getattr(args, "out", None) else None
    existed_before = out_dir.exists() if out_dir else True
    try:
        _COMMANDS[args.command](args)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        _cleanup(out_dir, existed_before)
        return 1
    except Exception as exc:  # runtime failure: remove partial outputs
        print(f"error: {exc}", file=sys.stderr)
        _cleanup(out_dir, existed_before)
        return 2


def _cleanup(out_dir: Path | None, existed_before: bool) -> None:
    if out_dir is not None and not existed_before and out_dir.exists():
        shutil.rmtree(out_dir, ignore_errors=True)


def main() -> None:
    raise SystemExit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
