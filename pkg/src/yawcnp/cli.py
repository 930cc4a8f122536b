"""Command-line entry point: generate, train, eval, predict.

Exit codes: 0 success, 2 bad arguments, 3 missing input, 4 numerical
divergence.  An optional key-value config file can set flag defaults;
explicit flags win.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import evaluation
from .cnp import load_checkpoint, predict_arrays, save_checkpoint
from .errors import (ChannelCountError, ManifestError, TrajectoryDivergedError,
                     TrainingDivergedError)
from .params import BUNDLED_VEHICLES, DEFAULT_VEHICLE, load_vehicle
from .scenarios import holdout_profiles, instantiate_all, simulate, training_profiles
from .tasks import build_meta, load_meta, save_meta
from .training import TrainConfig, train, validation_nll

EXIT_OK = 0
EXIT_BAD_ARGS = 2
EXIT_MISSING_INPUT = 3
EXIT_DIVERGED = 4


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(","))


def _read_config_defaults(path: str | None) -> dict[str, str]:
    if path is None:
        return {}
    cfg_path = Path(path)
    if not cfg_path.exists():
        raise FileNotFoundError(f"config file not found: {cfg_path}")
    out = {}
    for line in cfg_path.read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yawcnp",
                                     description="yaw-rate prediction workbench")
    parser.add_argument("--config", help="key-value file with flag defaults")
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=42)
    common.add_argument("--dt", type=float, default=0.01)
    common.add_argument("--jobs", type=int, default=1,
                        help="parallelism cap (reserved; evaluation is sequential)")

    gen = sub.add_parser("generate", parents=[common],
                         help="simulate the scenario catalog into a dataset")
    gen.add_argument("--dataset-dir", required=True)
    gen.add_argument("--friction", type=_parse_floats, default=(1.0, 0.5, 0.2))
    gen.add_argument("--vehicles", default=DEFAULT_VEHICLE,
                     help="comma-separated bundled vehicle names")
    gen.add_argument("--velocities", type=int, default=3,
                     help="initial speeds per scenario kind")

    tr = sub.add_parser("train", parents=[common], help="train the predictor")
    tr.add_argument("--dataset-dir", required=True)
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--lr", type=float, default=1e-3)
    tr.add_argument("--max-steps", type=int, default=50_000)
    tr.add_argument("--context-fraction", type=float, default=0.1)

    ev = sub.add_parser("eval", parents=[common], help="run the experiments")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--report-dir", required=True)
    ev.add_argument("--experiment", default="all",
                    choices=["friction", "mass", "scenario", "vehicle", "all"])
    ev.add_argument("--friction", type=_parse_floats, default=None,
                    help="override the experiment's friction grid")
    ev.add_argument("--vehicles", default=",".join(BUNDLED_VEHICLES))
    ev.add_argument("--velocities", type=int, default=3)

    pr = sub.add_parser("predict", parents=[common],
                        help="one-shot prediction from context/target CSVs")
    pr.add_argument("context_csv")
    pr.add_argument("target_csv")
    pr.add_argument("--checkpoint", required=True)
    pr.add_argument("--report-dir", required=True)
    pr.add_argument("--context-fraction", type=float, default=0.1)
    return parser


def _apply_config_defaults(parser, argv, defaults):
    """Config file values become parser defaults, so explicit flags win."""
    if not defaults:
        return parser.parse_args(argv)
    ns, _ = parser.parse_known_args(argv)
    for action in parser._subparsers._group_actions[0].choices.values():  # noqa: SLF001
        for key, val in defaults.items():
            for act in action._actions:  # noqa: SLF001
                if act.dest == key:
                    action.set_defaults(**{key: act.type(val) if act.type else val})
    return parser.parse_args(argv)


def _load_csv(path: Path, *, needs_psi_dot: bool) -> dict[str, np.ndarray]:
    if not path.exists():
        raise FileNotFoundError(f"input CSV not found: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split(",")
        required = ["t", "delta", "v", "a_long"] + (["psi_dot"] if needs_psi_dot else [])
        missing = [c for c in required if c not in header]
        if missing:
            raise ChannelCountError(f"{path}: missing columns {missing}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    bad = [r for r in rows if len(r) != len(header)]
    if bad:
        raise ChannelCountError(f"{path}: ragged rows")
    table = np.array(rows, dtype=float)
    return {name: table[:, i] for i, name in enumerate(header)}


def cmd_generate(args) -> int:
    out = Path(args.dataset_dir)
    out.mkdir(parents=True, exist_ok=True)
    specs = training_profiles(args.seed)
    series = []
    failures = 0
    for vid in args.vehicles.split(","):
        vehicle = load_vehicle(vid.strip())
        for scn in instantiate_all(specs, args.friction, dt=args.dt,
                                   velocity_count=args.velocities):
            try:
                series.append(simulate("std", scn, vehicle))
            except TrajectoryDivergedError as err:
                failures += 1
                print(f"warning: {err}", file=sys.stderr)
    if not series:
        print("error: no scenario produced data", file=sys.stderr)
        return EXIT_DIVERGED
    meta = build_meta(series)
    manifest = save_meta(meta, out)
    print(f"wrote {meta.K} tasks ({failures} diverged) to {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    meta = load_meta(args.dataset_dir)
    cfg = TrainConfig(lr=args.lr, max_steps=args.max_steps, seed=args.seed,
                      context_fraction=args.context_fraction)
    model, curve = train(meta, cfg)
    ckpt = Path(args.checkpoint)
    ckpt.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, ckpt)
    curve.save(ckpt.with_suffix(ckpt.suffix + ".loss.csv"))
    final_val = validation_nll(model, meta, context_fraction=args.context_fraction)
    print(f"trained {cfg.max_steps if not curve.steps else curve.steps[-1]} steps, "
          f"best validation NLL {final_val:.4f}, checkpoint {ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = load_checkpoint(ckpt)
    report_dir = Path(args.report_dir)
    report_dir.mkdir(parents=True, exist_ok=True)
    vehicles = {vid.strip(): load_vehicle(vid.strip())
                for vid in args.vehicles.split(",")}
    default = vehicles.get(DEFAULT_VEHICLE) or next(iter(vehicles.values()))
    train_specs = training_profiles(args.seed)
    hold_specs = holdout_profiles(args.seed)
    wanted = (["friction", "mass", "scenario", "vehicle"]
              if args.experiment == "all" else [args.experiment])
    reports = []
    for name in wanted:
        if name == "friction":
            frictions = args.friction or evaluation.EVAL_FRICTIONS
            rep = evaluation.run_friction_experiment(
                model, default, train_specs, frictions=frictions, dt=args.dt,
                velocity_count=args.velocities)
        elif name == "mass":
            frictions = args.friction or evaluation.TRAIN_FRICTIONS
            rep = evaluation.run_mass_experiment(
                model, default, train_specs, frictions=frictions, dt=args.dt,
                velocity_count=args.velocities)
        elif name == "scenario":
            frictions = args.friction or evaluation.TRAIN_FRICTIONS
            rep = evaluation.run_scenario_experiment(
                model, default, hold_specs, frictions=frictions, dt=args.dt,
                velocity_count=args.velocities)
        else:
            frictions = args.friction or evaluation.TRAIN_FRICTIONS
            rep = evaluation.run_vehicle_experiment(
                model, vehicles, hold_specs, frictions=frictions, dt=args.dt,
                velocity_count=args.velocities)
        rep.to_csv(report_dir / f"{name}.csv")
        (report_dir / f"{name}.txt").write_text(rep.format_table())
        rep.save_trajectories(report_dir)
        reports.append(rep)
    for rep in reports:
        print(rep.format_table())
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.exists():
        raise FileNotFoundError(f"checkpoint not found: {ckpt}")
    model = load_checkpoint(ckpt)
    ctx = _load_csv(Path(args.context_csv), needs_psi_dot=True)
    tgt = _load_csv(Path(args.target_csv), needs_psi_dot=False)
    if len(ctx["t"]) == 0:
        print("error: context CSV has no rows", file=sys.stderr)
        return EXIT_BAD_ARGS
    cx = np.column_stack([ctx["delta"], ctx["v"], ctx["a_long"]])
    tx = np.column_stack([tgt["delta"], tgt["v"], tgt["a_long"]])
    mu, sigma2 = predict_arrays(model, cx, ctx["psi_dot"], tx)
    out_dir = Path(args.report_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out = out_dir / "predictions.csv"
    with out.open("w") as fh:
        fh.write("t,mu,sigma2\n")
        for row in zip(tgt["t"], mu, sigma2):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    print(f"wrote {len(mu)} predictions to {out}")
    return EXIT_OK


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        defaults = _read_config_defaults(
            next((argv[i + 1] for i, a in enumerate(argv) if a == "--config"), None))
        args = _apply_config_defaults(parser, argv, defaults)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    handlers = {"generate": cmd_generate, "train": cmd_train,
                "eval": cmd_eval, "predict": cmd_predict}
    try:
        return handlers[args.command](args)
    except FileNotFoundError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_MISSING_INPUT
    except (ManifestError, ChannelCountError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_BAD_ARGS
    except (TrainingDivergedError, TrajectoryDivergedError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_DIVERGED


if __name__ == "__main__":
    sys.exit(main())
