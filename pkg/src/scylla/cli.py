"""``scylla`` command: read an MPS instance, run the heuristic, write the
solution file and a per-iteration log."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass

from scylla.errors import InstanceError, MpsError
from scylla.io import format_solution, parse_mps, write_solution
from scylla.propagate import FIX_ORDERS
from scylla.pump import ALPHA, BETA, EPS_INITIAL, PumpParams, solve

EXIT_FEASIBLE = 0
EXIT_NO_SOLUTION = 1
EXIT_USAGE = 2
EXIT_INSTANCE = 3

LOG_LEVELS = ("debug", "info", "warning", "error")
log = logging.getLogger("scylla")


@dataclass
class Config:
    instance_path: str
    output_path: str | None = None
    seed: int = 0
    time_limit_s: float = 600.0
    max_outer: int = 1000
    inner_iterlimit: int = 20_000
    total_inner_budget: int = 2_000_000
    eps0: float = EPS_INITIAL
    beta: float = BETA
    alpha: float = ALPHA
    feas_tol: float = 1e-6
    int_tol: float = 1e-6
    fix_order: str = "fractionality"
    scaling: bool = True
    adaptive_steps: bool = True
    stall_window: int = 1000
    stall_factor: float = 0.1
    mps_format: str = "free"
    log_level: str = "info"
    log_json: bool = False
    log_timing: bool = False
    log_file: str | None = None

    def pump_params(self) -> PumpParams:
        return PumpParams(
            alpha=self.alpha, beta=self.beta, eps0=self.eps0, time_limit=self.time_limit_s,
            max_outer=self.max_outer, inner_iterlimit=self.inner_iterlimit,
            total_inner_budget=self.total_inner_budget, feas_tol=self.feas_tol, int_tol=self.int_tol,
            fix_order=self.fix_order, scaling=self.scaling, stall_window=self.stall_window,
            stall_factor=self.stall_factor, adaptive_steps=self.adaptive_steps, seed=self.seed,
        )

    def validate(self) -> None:
        self.pump_params().validate()
        if self.fix_order not in FIX_ORDERS:
            raise ValueError(f"fix_order must be one of {FIX_ORDERS}")
        if self.log_level not in LOG_LEVELS:
            raise ValueError(f"log level must be one of {LOG_LEVELS}")
        if not 0 < self.stall_factor < 1:
            raise ValueError("stall_factor must lie in (0, 1)")


class _HelpFormatter(argparse.ArgumentDefaultsHelpFormatter):
    """Show defaults for valued options only; on/off switches read better without them."""

    def _get_help_string(self, action: argparse.Action) -> str:
        if action.nargs == 0:
            return action.help or ""
        return super()._get_help_string(action)


def build_parser() -> argparse.ArgumentParser:
    d = Config("")
    p = argparse.ArgumentParser(
        prog="scylla",
        description="Search for a feasible solution of a mixed-integer program given in MPS format.",
        formatter_class=_HelpFormatter,
    )
    p.add_argument("instance_path", metavar="INSTANCE", help="MPS file, optionally gzip-compressed")
    p.add_argument("-o", "--output", dest="output_path", default=d.output_path,
                   help="solution file (stdout when omitted)")
    p.add_argument("--seed", type=int, default=d.seed, help="random seed")
    p.add_argument("--time-limit", dest="time_limit_s", type=float, default=d.time_limit_s, help="seconds")
    p.add_argument("--max-outer", type=int, default=d.max_outer, help="outer iteration limit")
    p.add_argument("--inner-iterlimit", type=int, default=d.inner_iterlimit, help="PDHG iterations per LP solve")
    p.add_argument("--total-inner-budget", type=int, default=d.total_inner_budget,
                   help="PDHG iterations over the whole run")
    p.add_argument("--eps0", type=float, default=d.eps0, help="initial LP tolerance")
    p.add_argument("--beta", type=float, default=d.beta, help="tolerance decay per outer iteration")
    p.add_argument("--alpha", type=float, default=d.alpha, help="decay of the original-objective weight")
    p.add_argument("--feas-tol", type=float, default=d.feas_tol, help="relative row feasibility tolerance")
    p.add_argument("--int-tol", type=float, default=d.int_tol, help="integrality tolerance")
    p.add_argument("--fix-order", choices=FIX_ORDERS, default=d.fix_order, help="variable fixing order")
    p.add_argument("--no-scaling", dest="scaling", action="store_false", help="disable Ruiz scaling")
    p.add_argument("--no-adaptive-steps", dest="adaptive_steps", action="store_false",
                   help="use a fixed PDHG step size")
    p.add_argument("--stall-window", type=int, default=d.stall_window, help="PDHG stall detection window")
    p.add_argument("--stall-factor", type=float, default=d.stall_factor,
                   help="required relative residual improvement per window")
    p.add_argument("--mps-format", choices=("free", "fixed"), default=d.mps_format, help="MPS dialect")
    p.add_argument("--log-level", choices=LOG_LEVELS, default=d.log_level,
                   help="log verbosity (the SCYLLA_LOG environment variable takes precedence)")
    p.add_argument("--log-json", action="store_true", help="JSON-lines log instead of a table")
    p.add_argument("--log-timing", action="store_true",
                   help="include elapsed seconds in JSON log records (makes logs run-dependent)")
    p.add_argument("--log-file", default=d.log_file, help="log destination (stderr when omitted)")
    return p


class _JsonFormatter(logging.Formatter):
    def format(self, record):
        payload = getattr(record, "payload", None)
        if payload is None:
            payload = {"event": "message", "level": record.levelname.lower(), "message": record.getMessage()}
        return json.dumps(payload, sort_keys=True)


def _setup_logging(cfg: Config) -> logging.Handler:
    level = os.environ.get("SCYLLA_LOG", "").strip().lower() or cfg.log_level
    if level not in LOG_LEVELS:
        level = cfg.log_level
    handler = logging.FileHandler(cfg.log_file, mode="w") if cfg.log_file else logging.StreamHandler(sys.stderr)
    handler.setFormatter(_JsonFormatter() if cfg.log_json else logging.Formatter("%(message)s"))
    log.handlers[:] = [handler]
    log.setLevel(level.upper())
    log.propagate = False
    return handler


def _iteration_logger(cfg: Config):
    header = f"{'K':>5} {'inner':>7} {'eps':>9} {'kkt':>9} {'dist':>10} {'viol':>9} {'time':>8}"
    state = {"header": False}

    def on_iteration(rec: dict) -> None:
        if not log.isEnabledFor(logging.INFO):
            return
        if cfg.log_json:
            payload = {"event": "iteration", **rec}
            if not cfg.log_timing:
                payload.pop("elapsed_s", None)
            log.info("", extra={"payload": payload})
            return
        if not state["header"]:
            log.info(header)
            state["header"] = True
        log.info(f"{rec['K']:>5d} {rec['inner_iterations']:>7d} {rec['eps']:>9.2e} {rec['kkt']:>9.2e} "
                 f"{rec['distance']:>10.4g} {rec['violation']:>9.2e} {rec['elapsed_s']:>8.2f}")

    return on_iteration


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_FEASIBLE
    cfg = Config(**vars(ns))
    try:
        cfg.validate()
    except ValueError as exc:
        print(f"scylla: error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    handler = _setup_logging(cfg)
    try:
        try:
            inst = parse_mps(cfg.instance_path, cfg.mps_format)
            inst.validate()
        except FileNotFoundError:
            log.error(f"instance file not found: {cfg.instance_path}")
            return EXIT_INSTANCE
        except (OSError, MpsError, InstanceError) as exc:
            log.error(f"cannot read instance {cfg.instance_path}: {exc}")
            return EXIT_INSTANCE

        report = solve(inst, cfg.pump_params(), _iteration_logger(cfg))
        summary = {
            "event": "result", "instance": report.instance_name, "status": report.status,
            "objective": report.objective, "outer_iterations": report.outer_iterations,
            "inner_iterations": report.inner_iterations, "max_violation": report.max_violation,
            "seed": report.seed, "message": report.message,
        }
        if cfg.log_json:
            if cfg.log_timing:
                summary["wall_time_s"] = report.wall_time_s
            log.info("", extra={"payload": summary})
        else:
            log.info(f"status {report.status}  objective {report.objective}  outer {report.outer_iterations}  "
                     f"inner {report.inner_iterations}  time {report.wall_time_s:.2f}s"
                     + (f"  ({report.message})" if report.message else ""))

        if report.status == "error":
            log.error(report.message)
            return EXIT_INSTANCE
        if cfg.output_path:
            write_solution(report, cfg.output_path)
        else:
            sys.stdout.write(format_solution(report))
        return EXIT_FEASIBLE if report.status == "feasible" else EXIT_NO_SOLUTION
    finally:
        handler.flush()
        if cfg.log_file:
            handler.close()
        log.handlers[:] = []


if __name__ == "__main__":
    sys.exit(main())
