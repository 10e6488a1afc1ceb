"""``scylla-bench``: multi-seed batch runs over an instance directory,
per-run CSV records and aggregate tables."""

from __future__ import annotations

import argparse
import csv
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from scylla.cli import Config
from scylla.errors import ScyllaError
from scylla.io import parse_best_known, parse_mps
from scylla.pump import solve

GAP_CAP = 10.0
GAP_FLOOR = 1e-10
WIN_FACTOR = 0.9
BUCKET_EDGES = (1.0, 60.0)
RECORD_STATUSES = ("feasible", "no_solution", "error", "limit")
LIMIT_MESSAGES = ("time limit", "outer iteration limit", "inner iteration budget")
MPS_SUFFIXES = (".mps", ".mps.gz", ".MPS", ".MPS.gz")


@dataclass
class RunRecord:
    instance: str
    seed: int
    status: str
    time_s: float
    objective: float | None = None
    gap: float | None = None
    K: int = 0
    inner_iterations: int = 0
    overhead_s: float = 0.0
    message: str = ""

    def __post_init__(self):
        if self.status not in RECORD_STATUSES:
            raise ValueError(f"unknown status {self.status!r}")
        if self.gap is not None and self.gap < 0:
            raise ValueError("gap must be non-negative")

    def outcome(self) -> tuple:
        """The run-independent part of the record (everything but timings)."""
        return (self.instance, self.seed, self.status, self.objective, self.gap, self.K, self.inner_iterations)


def gap(objective: float, best: float) -> float:
    return min(abs(objective - best) / max(abs(best), GAP_FLOOR), GAP_CAP)


def shifted_geom_mean(values, shift: float = 1.0) -> float:
    values = [float(v) for v in values]
    if not values:
        raise ValueError("shifted geometric mean of an empty list")
    if shift < 0 or any(v < 0 for v in values):
        raise ValueError("values and shift must be non-negative")
    if shift == 0 and any(v == 0 for v in values):
        return 0.0
    return math.exp(math.fsum(math.log(v + shift) for v in values) / len(values)) - shift


def instance_name(path: Path) -> str:
    name = path.name
    for suffix in (".gz", ".mps", ".MPS"):
        if name.endswith(suffix):
            name = name[: -len(suffix)]
    return name


def list_instances(directory) -> list[Path]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ScyllaError(f"not a directory: {directory}")
    return sorted(p for p in directory.iterdir() if p.is_file() and p.name.endswith(MPS_SUFFIXES))


def run_one(path, seed: int, config: Config, best: float | None = None) -> RunRecord:
    """One isolated run; any failure becomes an ``error`` record."""
    path = Path(path)
    name = instance_name(path)
    t0 = time.monotonic()
    try:
        inst = parse_mps(path, config.mps_format)
        inst.validate()
        overhead = time.monotonic() - t0
        params = config.pump_params()
        params.seed = seed
        rep = solve(inst, params)
    except Exception as exc:  # noqa: BLE001 - failures are isolated per run
        return RunRecord(name, seed, "error", time.monotonic() - t0, gap=GAP_CAP, message=f"{type(exc).__name__}: {exc}")
    status = rep.status
    if status == "no_solution" and rep.message in LIMIT_MESSAGES:
        status = "limit"
    g = None
    if status != "feasible":
        g = GAP_CAP
    elif best is not None:
        g = gap(rep.objective, best)
    return RunRecord(name, seed, status, rep.wall_time_s, rep.objective, g, rep.outer_iterations,
                     rep.inner_iterations, overhead, rep.message)


def _run_job(job):
    return run_one(*job)


def run_batch(directory, seeds, config: Config, best_known: dict[str, float] | None = None,
              workers: int = 1) -> list[RunRecord]:
    """One record per (instance, seed), sorted by instance then seed."""
    best_known = best_known or {}
    paths = list_instances(directory)
    jobs = [(p, int(s), config, best_known.get(instance_name(p))) for p in paths for s in seeds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_run_job, jobs))
    else:
        records = [_run_job(j) for j in jobs]
    return sorted(records, key=lambda r: (r.instance, r.seed))


def bucket_of(lp_seconds: float | None) -> str:
    if lp_seconds is None:
        return "unknown"
    lo, hi = BUCKET_EDGES
    if lp_seconds < lo:
        return f"[0,{lo:g})"
    if lp_seconds < hi:
        return f"[{lo:g},{hi:g})"
    return f"[{hi:g},lim]"


def _aggregate(records: list[RunRecord], time_shift: float, gap_shift: float) -> dict:
    if not records:
        return {}
    gaps = [r.gap for r in records if r.gap is not None]
    return {
        "runs": len(records),
        "found": sum(r.status == "feasible" for r in records),
        "time_sgm": shifted_geom_mean([r.time_s for r in records], time_shift),
        "gap_sgm": shifted_geom_mean(gaps, gap_shift) if gaps else None,
        "overhead_mean": math.fsum(r.overhead_s for r in records) / len(records),
    }


def summarize(records, time_shift: float = 1.0, gap_shift: float = 1.0,
              lp_times: dict[str, float] | None = None) -> dict:
    """Aggregate table: ``{"all": {...}}`` plus one entry per LP-time bucket
    when ``lp_times`` (instance -> root LP seconds) is given."""
    records = list(records)
    if not records:
        return {}
    out = {"all": _aggregate(records, time_shift, gap_shift)}
    if lp_times is not None:
        groups: dict[str, list[RunRecord]] = {}
        for r in records:
            groups.setdefault(bucket_of(lp_times.get(r.instance)), []).append(r)
        for key in sorted(groups):
            out[key] = _aggregate(groups[key], time_shift, gap_shift)
    return out


def _per_instance(records, time_shift, gap_shift) -> dict[str, dict]:
    groups: dict[str, list[RunRecord]] = {}
    for r in records:
        groups.setdefault(r.instance, []).append(r)
    return {k: _aggregate(v, time_shift, gap_shift) for k, v in groups.items()}


def compare(a, b, time_shift: float = 1.0, gap_shift: float = 1.0) -> dict:
    """Head-to-head counts over the instances present in both record sets.

    Per instance, seeds are aggregated by shifted geometric mean. A side
    wins on a metric when its value is at most 90% of the other's. Time
    is only compared where both sides found a solution.
    """
    pa, pb = _per_instance(a, time_shift, gap_shift), _per_instance(b, time_shift, gap_shift)
    common = sorted(set(pa) & set(pb))
    res = {side: {"found": 0, "only": 0, "gap_wins": 0, "time_wins": 0} for side in ("a", "b")}
    for inst in common:
        x, y = pa[inst], pb[inst]
        fx, fy = x["found"] > 0, y["found"] > 0
        res["a"]["found"] += fx
        res["b"]["found"] += fy
        res["a"]["only"] += fx and not fy
        res["b"]["only"] += fy and not fx
        for metric, key in (("gap_sgm", "gap_wins"), ("time_sgm", "time_wins")):
            vx, vy = x[metric], y[metric]
            if vx is None or vy is None or (key == "time_wins" and not (fx and fy)):
                continue
            if vx <= WIN_FACTOR * vy and vx < vy:
                res["a"][key] += 1
            elif vy <= WIN_FACTOR * vx and vy < vx:
                res["b"][key] += 1
    res["instances"] = len(common)
    return res


_FIELDS = [f.name for f in fields(RunRecord)]


def write_records(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=_FIELDS)
        w.writeheader()
        for r in records:
            row = asdict(r)
            for k in ("time_s", "objective", "gap", "overhead_s"):
                row[k] = ("n/a" if k == "gap" else "") if row[k] is None else repr(float(row[k]))
            w.writerow(row)


def read_records(path) -> list[RunRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(_FIELDS) - set(reader.fieldnames or ())
        if missing:
            raise ScyllaError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            opt = lambda s: None if s in ("", "n/a") else float(s)  # noqa: E731
            out.append(RunRecord(row["instance"], int(row["seed"]), row["status"], float(row["time_s"]),
                                 opt(row["objective"]), opt(row["gap"]), int(row["K"]),
                                 int(row["inner_iterations"]), float(row["overhead_s"]), row["message"]))
    return out


def read_lp_times(path) -> dict[str, float]:
    """CSV ``instance,lp_seconds``."""
    out = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if not {"instance", "lp_seconds"} <= set(reader.fieldnames or ()):
            raise ScyllaError(f"{path}: expected header 'instance,lp_seconds'")
        for row in reader:
            out[row["instance"].strip()] = float(row["lp_seconds"])
    return out


def parse_seeds(text: str) -> list[int]:
    """``"0..9"``, ``"1,4,7"`` or a mix such as ``"0..2,10"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise ValueError(f"no seeds in {text!r}")
    return seeds


def format_summary(summary: dict) -> str:
    lines = [f"{'set':<12} {'runs':>5} {'found':>6} {'gap':>9} {'time(s)':>9} {'overhead(s)':>12}"]
    for key, s in summary.items():
        g = "-" if s["gap_sgm"] is None else f"{s['gap_sgm']:.4f}"
        lines.append(f"{key:<12} {s['runs']:>5d} {s['found']:>6d} {g:>9} {s['time_sgm']:>9.3f} "
                     f"{s['overhead_mean']:>12.3f}")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="scylla-bench", description="Batch runs and result comparison.",
                                formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run every instance of a directory under several seeds",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    r.add_argument("--dir", required=True, help="directory of MPS files")
    r.add_argument("--seeds", default="0..9", help="seed list, e.g. 0..9 or 1,3,5")
    r.add_argument("--out", required=True, help="CSV file for the run records")
    r.add_argument("--best-known", help="CSV with columns instance,objective")
    r.add_argument("--buckets", help="CSV with columns instance,lp_seconds")
    r.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    r.add_argument("--time-limit", type=float, default=600.0, help="seconds per run")
    r.add_argument("--max-outer", type=int, default=1000, help="outer iteration limit per run")
    r.add_argument("--time-shift", type=float, default=1.0, help="shift for the time geometric mean")
    r.add_argument("--gap-shift", type=float, default=1.0, help="shift for the gap geometric mean")
    c = sub.add_parser("compare", help="head-to-head comparison of two record files",
                       formatter_class=argparse.ArgumentDefaultsHelpFormatter)
    c.add_argument("a", help="first record CSV")
    c.add_argument("b", help="second record CSV")
    c.add_argument("--time-shift", type=float, default=1.0, help="shift for the time geometric mean")
    c.add_argument("--gap-shift", type=float, default=1.0, help="shift for the gap geometric mean")
    return p


def main(argv: list[str] | None = None) -> int:
    try:
        ns = build_parser().parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    try:
        if ns.command == "run":
            seeds = parse_seeds(ns.seeds)
            cfg = Config("", time_limit_s=ns.time_limit, max_outer=ns.max_outer)
            cfg.validate()
            best = parse_best_known(ns.best_known) if ns.best_known else None
            lp_times = read_lp_times(ns.buckets) if ns.buckets else None
            records = run_batch(ns.dir, seeds, cfg, best, ns.workers)
            write_records(records, ns.out)
            summary = summarize(records, ns.time_shift, ns.gap_shift, lp_times)
            if summary:
                print(format_summary(summary))
            return 0
        a, b = read_records(ns.a), read_records(ns.b)
        res = compare(a, b, ns.time_shift, ns.gap_shift)
        print(f"{'':<4} {'found':>6} {'only':>5} {'gap wins':>9} {'time wins':>10}")
        for side, path in (("a", ns.a), ("b", ns.b)):
            s = res[side]
            print(f"{side:<4} {s['found']:>6d} {s['only']:>5d} {s['gap_wins']:>9d} {s['time_wins']:>10d}  {path}")
        print(f"instances in common: {res['instances']}")
        return 0
    except (OSError, ValueError, ScyllaError) as exc:
        print(f"scylla-bench: error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, ValueError) else 3


if __name__ == "__main__":
    sys.exit(main())
