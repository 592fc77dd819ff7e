#!/usr/bin/env python3
"""
D-RIS link simulator command line.

    python dris_sim.py analyze   --config reference --sweep eta_s --values 0.05,0.1,0.2 --out asr.csv
    python dris_sim.py simulate  --config reference --sweep m_a --values 1000,2000 --trials 10000 --workers 4 --out mc.csv
    python dris_sim.py cep-demo  --config cep_demo --scenario polluted --out cep.csv
    python dris_sim.py validate  --config reference

Exit codes: 0 success, 1 unexpected failure or failed checks, 2 invalid input.
"""
import argparse
import logging
import os
import sys
from typing import List, Optional

from dotenv import load_dotenv

from app import harness, validation
from app.errors import ConfigValidationError, DrisError
from app.scenario import ScenarioConfig
from app.scenarios import load_scenario_file

load_dotenv()

logging.basicConfig(
    level=os.getenv('DRIS_LOG_LEVEL', 'INFO').upper(),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("dris_sim")

DEFAULT_CONFIG = os.getenv('DRIS_CONFIG', 'reference')


def parse_values(text: str) -> List[float]:
    """Comma-separated numbers; an empty string is an empty sweep"""
    values = []
    for part in text.split(','):
        part = part.strip()
        if not part:
            continue
        try:
            values.append(float(part))
        except ValueError:
            raise ConfigValidationError("--values", f"not a number: {part!r}") from None
    return values


def load_config(name: str) -> ScenarioConfig:
    try:
        cfg = load_scenario_file(name)
    except FileNotFoundError as e:
        raise ConfigValidationError("--config", str(e)) from None
    seed = os.getenv('DRIS_SEED')
    if seed:
        try:
            cfg = cfg.replace(seed=int(seed))
        except ValueError:
            raise ConfigValidationError("DRIS_SEED", f"not an integer: {seed!r}") from None
    workers = os.getenv('DRIS_WORKERS')
    if workers:
        try:
            count = int(workers)
        except ValueError:
            raise ConfigValidationError("DRIS_WORKERS", f"not an integer: {workers!r}") from None
        cfg = cfg.replace(workers=count)
    logger.info(f"scenario {name}: seed={cfg.seed} M_a={cfg.m_a} M_e={cfg.m_e} N={cfg.slot.n_total} "
                f"mode={cfg.adversary.mode} link={cfg.link_mode} gain={cfg.gain_mode}")
    logger.warning(f"Eve's cascades are summed over her own M_e={cfg.m_e} elements, "
                   f"not over the M_a={cfg.m_a} D-RIS elements")
    return cfg


def cmd_analyze(args) -> int:
    cfg = load_config(args.config)
    rows = harness.run_sweep(cfg, args.sweep, parse_values(args.values), simulate=False)
    harness.emit(rows, args.out, cfg=cfg, extra_meta={"axis": args.sweep, "kind": "closed_form"})
    if args.plot_data:
        harness.emit_plot_data(rows, args.plot_data)
    print(f"{len(rows)} closed-form rows written to {args.out}")
    return 0


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    trials = args.trials if args.trials is not None else cfg.trials
    rows = harness.run_sweep(cfg, args.sweep, parse_values(args.values), trials=trials,
                             workers=args.workers or cfg.workers)
    harness.emit(rows, args.out, cfg=cfg, extra_meta={"axis": args.sweep, "kind": "monte_carlo"})
    if args.plot_data:
        harness.emit_plot_data(rows, args.plot_data)
    if not rows or trials <= 0:
        print(f"{len(rows)} rows written to {args.out} (no trials, cross-validation skipped)")
        return 0
    report = harness.cross_validate(rows)
    if args.report:
        harness.emit(report, args.report, cfg=cfg, extra_meta={"axis": args.sweep, "kind": "cross_validation"})
    print(f"{len(rows)} rows x {trials} trials written to {args.out}; "
          f"{len(report.flagged)} of {len(report.checks)} cross-validation checks flagged (|z| > {harness.Z_LIMIT:g})")
    return 0


def cmd_cep_demo(args) -> int:
    cfg = load_config(args.config)
    trace = harness.trace_cep(cfg, args.scenario, args.trial, noiseless=True if args.noiseless else None)
    harness.emit(trace.records(), args.out, cfg=cfg, extra_meta={"scenario": args.scenario})
    print(f"CEP {args.scenario}: UE tag {trace.ue.scenario_tag} (trusted={trace.ue.trusted}), "
          f"BS tag {trace.bs.scenario_tag} (trusted={trace.bs.trusted})")
    for name, error in trace.errors().items():
        print(f"  {name:<10} relative error {error:.3e}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config)
    only = [name.strip() for name in args.only.split(',') if name.strip()] if args.only else None
    try:
        results = validation.run_checks(cfg, args.scale, only)
    except ValueError as e:
        raise ConfigValidationError("--only", str(e)) from None
    return 0 if validation.print_report(results, color=sys.stdout.isatty()) else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dris_sim", description="D-RIS link simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config(p):
        p.add_argument("--config", default=DEFAULT_CONFIG, help="bundled scenario name or path to a scenario file")

    def add_sweep(p):
        p.add_argument("--sweep", required=True, choices=harness.SWEEP_AXES)
        p.add_argument("--values", required=True, help="comma-separated axis values")
        p.add_argument("--out", required=True)
        p.add_argument("--plot-data", dest="plot_data", help="optional whitespace-separated plot data file")

    p = sub.add_parser("analyze", help="closed forms only")
    add_config(p)
    add_sweep(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("simulate", help="Monte Carlo, closed forms and cross-validation")
    add_config(p)
    add_sweep(p)
    p.add_argument("--trials", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--report", help="optional cross-validation CSV")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("cep-demo", help="per-stage estimates and recovery traces")
    add_config(p)
    p.add_argument("--scenario", required=True, choices=tuple(harness.CEP_SCENARIOS))
    p.add_argument("--out", required=True)
    p.add_argument("--trial", type=int, default=0, help="trial index of the channel draw")
    p.add_argument("--noiseless", action="store_true")
    p.set_defaults(func=cmd_cep_demo)

    p = sub.add_parser("validate", help="acceptance checks, exit code 0 on pass")
    add_config(p)
    p.add_argument("--scale", choices=tuple(validation.SCALES), default="desk")
    p.add_argument("--only", help="comma-separated subset of: " + ", ".join(validation.CHECKS))
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DrisError as e:
        logger.error(f"{type(e).__name__}: {e}")
        return 2
    except Exception as e:
        logger.exception(f"Unexpected error: {e}")
        return 1


if __name__ == "__main__":
    sys.exit(main())
