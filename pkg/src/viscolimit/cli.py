"""Command-line front end.

    viscolimit sweep  --config exp.toml [--out DIR] [--workers N]
    viscolimit run    --config exp.toml --epsilon 1e-3 [--out DIR]
    viscolimit check  --config exp.toml
    viscolimit resume --checkpoint state.oldb --until 2.0 [--out PATH]

The default worker count comes from ``VISCOLIMIT_WORKERS`` (else the CPU count).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import ConfigError, load_config
from .constitutive import besov_gamma
from .report import write_report
from .solver import DtPolicy, run
from .sweep import CONVERGENCE_METRICS, SweepAborted, WORKERS_ENV, evaluate, oldroyd_run, reference_run, sweep


def _table(rows: list[dict], columns: list[str]) -> str:
    out = ["  ".join(f"{c:>12}" for c in columns)]
    out += ["  ".join(f"{r[c]:12.5g}" for c in columns) for r in rows]
    return "\n".join(out)


def cmd_check(args) -> int:
    cfg = load_config(args.config)
    p = cfg.base_params
    print(f"config OK: {cfg.grid.dims}D M={cfg.grid.resolution}, mode={cfg.mode}, Re={p.reynolds:g}, omega={p.omega:g}")
    print(f"  eps = {', '.join(f'{e:g}' for e in cfg.epsilons)}")
    print(f"  alpha={cfg.split.alpha:g} beta={cfg.split.beta:g} s={cfg.split.s:g} s'={cfg.split.s_prime:g}")
    if cfg.mode == "besov":
        print(f"  gamma(omega) = {besov_gamma(p.omega):.6g}")
    print(f"  T0={cfg.horizon:g}, initial: {cfg.initial.velocity} / {cfg.initial.stress}")
    return 0


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    report = sweep(cfg, workers=args.workers)
    out = write_report(report, args.out or cfg.output_dir)
    print(_table(report.rows, ["eps", *CONVERGENCE_METRICS, "X_T0", "damping_eps", "blowup"]))
    for name in CONVERGENCE_METRICS:
        slope = report.slopes[name]
        shown = "n/a" if slope is None else f"{slope:.4g}"
        print(f"{name}: strictly decreasing={report.monotone[name]}, log-log slope={shown}")
    if report.empirical_eps0 is not None:
        print(f"largest eps with no blow-up at or below it: {report.empirical_eps0:g}")
    print(f"report written to {out}")
    return 1 if any(report.monotone[m] is False for m in CONVERGENCE_METRICS) else 0


def cmd_run(args) -> int:
    cfg = load_config(args.config)
    if not args.epsilon > 0:
        raise ConfigError(f"--epsilon must be > 0, got {args.epsilon}")
    reference = reference_run(cfg)
    traj = oldroyd_run(cfg, args.epsilon)
    row, _ = evaluate(traj, reference, cfg)
    out = Path(args.out or cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    ckpt = save_checkpoint(traj.final, traj.params, out / f"state_eps{args.epsilon:g}_t{traj.final.t:g}.oldb")
    print(json.dumps({k: (None if v != v else v) for k, v in row.items()}, indent=2))
    print(f"final state written to {ckpt}")
    return 0 if traj.completed else 1


def cmd_resume(args) -> int:
    state, params = load_checkpoint(args.checkpoint)
    if not args.until > state.t:
        raise CheckpointError(f"--until {args.until} must exceed the checkpoint time {state.t}")
    model = "newtonian" if state.tau_hat is None else "oldroyd"
    policy = DtPolicy(accuracy=args.dt_accuracy)
    traj = run(state, params, args.until - state.t, policy, model=model, layer=False, times=[state.t, args.until])
    if not traj.completed:
        print(f"blow-up at t={traj.blowup_time:.6g}: {traj.blowup_reason}", file=sys.stderr)
        return 1
    out = Path(args.out) if args.out else Path(args.checkpoint).with_name(
        f"{Path(args.checkpoint).stem}_t{args.until:g}.oldb"
    )
    save_checkpoint(traj.final, params, out)
    print(f"advanced {model} state from t={state.t:g} to t={traj.final.t:g}; written to {out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="viscolimit", description="Oldroyd-B Newtonian-limit experiments")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sweep", help="run the epsilon sweep and write a report")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="output directory (default: output.dir of the config)")
    p.add_argument("--workers", type=int, help=f"worker processes (default: ${WORKERS_ENV} or CPU count)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("run", help="one Oldroyd-B run against the Navier-Stokes reference")
    p.add_argument("--config", required=True)
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="validate a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("resume", help="continue a checkpointed state to a later time")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--until", type=float, required=True)
    p.add_argument("--out", help="output checkpoint path")
    p.add_argument("--dt-accuracy", type=float, default=1e-3)
    p.set_defaults(func=cmd_resume)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ConfigError, CheckpointError, SweepAborted, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
