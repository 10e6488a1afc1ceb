"""MPS input, solution files and best-known-objective tables."""

from __future__ import annotations

import csv
import gzip
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from scylla.errors import MpsError, ScyllaError, UnsupportedFeatureError
from scylla.model import INF, Instance, Row, Variable

UNSUPPORTED_SECTIONS = {
    "SOS", "QUADOBJ", "QMATRIX", "QSECTION", "QCMATRIX", "INDICATORS",
    "GENCONS", "PWLOBJ", "CSECTION", "BRANCH", "SCENARIOS",
}
KNOWN_SECTIONS = {"NAME", "ROWS", "COLUMNS", "RHS", "RANGES", "BOUNDS", "OBJSENSE", "OBJSENS", "OBJNAME", "ENDATA"}
BOUND_TYPES_NO_VALUE = {"FR", "MI", "PL", "BV"}
BOUND_TYPES = BOUND_TYPES_NO_VALUE | {"UP", "LO", "FX", "LI", "UI"}
SENSE_CODES = {"N", "G", "L", "E"}

INFEASIBLE_MARKER = "=infeas="
STATUSES = ("feasible", "no_solution", "error", "limit")


@dataclass
class SolutionReport:
    instance_name: str
    status: str
    objective: float | None = None
    assignments: list[tuple[str, float]] = field(default_factory=list)
    wall_time_s: float = 0.0
    outer_iterations: int = 0
    inner_iterations: int = 0
    max_violation: float = float("nan")
    seed: int = 0
    message: str = ""

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError(f"unknown status {self.status!r}")


def _open_text(path):
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rt", encoding="utf-8", errors="replace")
    return open(path, "r", encoding="utf-8", errors="replace")


def _fixed_fields(line: str) -> list[str]:
    """Split a fixed-format MPS data line by column position."""
    spans = [(1, 3), (4, 12), (14, 22), (24, 36), (39, 47), (49, 61)]
    out = [line[a:b].strip() for a, b in spans]
    while out and not out[-1]:
        out.pop()
    return out


def _number(tok: str, lineno: int, path) -> float:
    try:
        return float(tok)
    except ValueError:
        raise MpsError(f"expected a number, got {tok!r}", lineno, path) from None


def parse_mps(path, dialect: str = "free") -> Instance:
    """Read an MPS file (``dialect`` ``"free"`` or ``"fixed"``; gzip is
    detected automatically).

    In fixed format, names are taken from column positions and may contain
    spaces; the first field of a COLUMNS/RHS/RANGES line must be blank.
    """
    if dialect not in ("free", "fixed"):
        raise ValueError(f"unknown MPS dialect {dialect!r}")
    name = Path(path).name
    for suffix in (".gz", ".mps"):
        if name.lower().endswith(suffix):
            name = name[: -len(suffix)]

    row_index: dict[str, int] = {}
    rows: list[Row] = []
    obj_row: str | None = None
    obj_name_wanted: str | None = None
    free_rows: set[str] = set()
    col_index: dict[str, int] = {}
    variables: list[Variable] = []
    entries: list[dict[int, float]] = []
    obj_coef: dict[int, float] = {}
    objective_sense = "min"
    objective_constant = 0.0
    ranges: dict[int, float] = {}
    bounded_lower: set[int] = set()
    section = None
    integer_block = False

    with _open_text(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.rstrip("\n\r")
            if not line.strip() or line.lstrip().startswith("*"):
                continue
            if not line[0].isspace():
                tokens = line.split()
                head = tokens[0].upper()
                if head in UNSUPPORTED_SECTIONS:
                    raise UnsupportedFeatureError(f"unsupported MPS section {head}", lineno, path)
                if head not in KNOWN_SECTIONS:
                    raise MpsError(f"unknown section {tokens[0]!r}", lineno, path)
                section = head
                if head == "NAME":
                    rest = line[4:].strip()
                    if rest:
                        name = rest
                elif head in ("OBJSENSE", "OBJSENS") and len(tokens) > 1:
                    objective_sense = _parse_sense(tokens[1], lineno, path)
                elif head == "OBJNAME" and len(tokens) > 1:
                    obj_name_wanted = tokens[1]
                elif head == "ENDATA":
                    break
                continue

            if section is None:
                raise MpsError("data line before any section", lineno, path)
            tokens = _fixed_fields(line) if dialect == "fixed" else line.split()
            if dialect == "fixed" and section in ("COLUMNS", "RHS", "RANGES"):
                if tokens and tokens[0] == "":
                    tokens = tokens[1:]
                elif tokens:
                    raise MpsError("field 1 must be blank in this section", lineno, path)
            if dialect == "fixed" and section == "COLUMNS" and "'MARKER'" in line.upper():
                tokens = line.split()

            if section in ("OBJSENSE", "OBJSENS"):
                objective_sense = _parse_sense(tokens[0], lineno, path)
            elif section == "OBJNAME":
                obj_name_wanted = tokens[0]
            elif section == "ROWS":
                if len(tokens) != 2:
                    raise MpsError("ROWS line needs a sense and a name", lineno, path)
                code, rname = tokens[0].upper(), tokens[1]
                if code not in SENSE_CODES:
                    raise MpsError(f"unknown row sense {tokens[0]!r}", lineno, path)
                if rname in row_index or rname == obj_row or rname in free_rows:
                    raise MpsError(f"duplicate row {rname!r}", lineno, path)
                if code == "N":
                    if obj_row is None and (obj_name_wanted is None or obj_name_wanted == rname):
                        obj_row = rname
                    else:
                        free_rows.add(rname)
                else:
                    row_index[rname] = len(rows)
                    rows.append(Row(rname, code, [], 0.0))
            elif section == "COLUMNS":
                if len(tokens) >= 3 and tokens[1].strip("'\"").upper() == "MARKER":
                    kind = tokens[2].strip("'\"").upper()
                    if kind == "INTORG":
                        integer_block = True
                    elif kind == "INTEND":
                        integer_block = False
                    else:
                        raise MpsError(f"unknown marker {tokens[2]!r}", lineno, path)
                    continue
                if len(tokens) not in (3, 5):
                    raise MpsError("COLUMNS line needs a column and one or two (row, value) pairs", lineno, path)
                cname = tokens[0]
                j = col_index.get(cname)
                if j is None:
                    j = col_index[cname] = len(variables)
                    variables.append(Variable(cname, 0.0, INF, integer_block, 0.0))
                    entries.append({})
                for rname, tok in zip(tokens[1::2], tokens[2::2]):
                    val = _number(tok, lineno, path)
                    if rname == obj_row:
                        if j in obj_coef:
                            raise MpsError(f"duplicate objective entry for {cname!r}", lineno, path)
                        obj_coef[j] = val
                    elif rname in row_index:
                        i = row_index[rname]
                        if i in entries[j]:
                            raise MpsError(f"duplicate entry ({cname!r}, {rname!r})", lineno, path)
                        entries[j][i] = val
                    elif rname in free_rows:
                        continue
                    else:
                        raise MpsError(f"unknown row {rname!r}", lineno, path)
            elif section in ("RHS", "RANGES"):
                pairs = tokens[1:] if len(tokens) % 2 == 1 else tokens
                if not pairs or len(pairs) % 2:
                    raise MpsError(f"malformed {section} line", lineno, path)
                for rname, tok in zip(pairs[0::2], pairs[1::2]):
                    val = _number(tok, lineno, path)
                    if section == "RHS" and rname == obj_row:
                        objective_constant = -val
                    elif rname in row_index:
                        i = row_index[rname]
                        if section == "RHS":
                            rows[i].rhs = val
                        else:
                            ranges[i] = val
                    elif rname in free_rows or rname == obj_row:
                        continue
                    else:
                        raise MpsError(f"unknown row {rname!r}", lineno, path)
            elif section == "BOUNDS":
                _apply_bound(tokens, col_index, variables, bounded_lower, lineno, path)

    if obj_row is None and obj_name_wanted is not None:
        raise MpsError(f"objective row {obj_name_wanted!r} not found", None, path)
    for i, val in ranges.items():
        row = rows[i]
        # keep the width as written so files round-trip exactly
        width = abs(val)
        if row.sense == "G" or (row.sense == "E" and val >= 0):
            lo = row.rhs
        else:
            lo = row.rhs - width
        row.sense, row.rhs, row.range = "R", lo, width
    for j, col in enumerate(entries):
        for i, val in col.items():
            rows[i].coefficients.append((j, val))
    for j, val in obj_coef.items():
        variables[j].objective = val
    inst = Instance(name, variables, rows, objective_sense, objective_constant)
    inst.validate()
    return inst


def _parse_sense(tok: str, lineno, path) -> str:
    t = tok.upper()
    if t in ("MAX", "MAXIMIZE", "MAXIMISE"):
        return "max"
    if t in ("MIN", "MINIMIZE", "MINIMISE"):
        return "min"
    raise MpsError(f"unknown objective sense {tok!r}", lineno, path)


def _apply_bound(tokens, col_index, variables, bounded_lower, lineno, path) -> None:
    if not tokens:
        raise MpsError("empty BOUNDS line", lineno, path)
    btype = tokens[0].upper()
    if btype not in BOUND_TYPES:
        if btype == "SC":
            raise UnsupportedFeatureError("semicontinuous variables are not supported", lineno, path)
        raise MpsError(f"unknown bound type {tokens[0]!r}", lineno, path)
    rest = tokens[1:]
    # optional bound-set name: drop it when the remaining fields still parse
    if btype in BOUND_TYPES_NO_VALUE:
        # a trailing value is tolerated (and ignored) on these types
        if len(rest) == 1:
            cname = rest[0]
        elif len(rest) == 2:
            cname = rest[0] if rest[0] in col_index and rest[1] not in col_index else rest[1]
        elif len(rest) == 3:
            cname = rest[1]
        else:
            raise MpsError("malformed BOUNDS line", lineno, path)
        value = None
    else:
        if len(rest) == 3:
            cname, value = rest[1], rest[2]
        elif len(rest) == 2:
            cname, value = rest[0], rest[1]
        else:
            raise MpsError("malformed BOUNDS line", lineno, path)
    if cname not in col_index:
        raise MpsError(f"unknown column {cname!r}", lineno, path)
    j = col_index[cname]
    var = variables[j]
    val = _number(value, lineno, path) if value is not None else None
    if btype == "UP" or btype == "UI":
        var.upper = val
        if val < 0 and var.lower == 0.0 and j not in bounded_lower:
            var.lower = -INF
        if btype == "UI":
            var.is_integer = True
    elif btype in ("LO", "LI"):
        var.lower = val
        bounded_lower.add(j)
        if btype == "LI":
            var.is_integer = True
    elif btype == "FX":
        var.lower = var.upper = val
        bounded_lower.add(j)
    elif btype == "FR":
        var.lower, var.upper = -INF, INF
        bounded_lower.add(j)
    elif btype == "MI":
        var.lower = -INF
        bounded_lower.add(j)
    elif btype == "PL":
        var.upper = INF
    elif btype == "BV":
        var.is_integer = True
        var.lower, var.upper = 0.0, 1.0
        bounded_lower.add(j)


def _fmt(v: float) -> str:
    return repr(float(v))


def write_mps(inst: Instance, path) -> None:
    """Write ``inst`` as free-format MPS; floats round-trip exactly."""
    lines = [f"NAME {inst.name}"]
    if inst.objective_sense == "max":
        lines += ["OBJSENSE", "    MAX"]
    lines.append("ROWS")
    lines.append(" N  obj")
    for row in inst.rows:
        code = "G" if row.sense == "R" else row.sense
        lines.append(f" {code}  {row.name}")
    by_col: list[list[tuple[str, float]]] = [[] for _ in inst.variables]
    for row in inst.rows:
        for j, a in row.coefficients:
            by_col[j].append((row.name, a))
    lines.append("COLUMNS")
    in_int = False
    for j, var in enumerate(inst.variables):
        if var.is_integer != in_int:
            kind = "INTORG" if var.is_integer else "INTEND"
            lines.append(f"    MARKER 'MARKER' '{kind}'")
            in_int = var.is_integer
        lines.append(f"    {var.name} obj {_fmt(var.objective)}")
        for rname, a in by_col[j]:
            lines.append(f"    {var.name} {rname} {_fmt(a)}")
    if in_int:
        lines.append("    MARKER 'MARKER' 'INTEND'")
    lines.append("RHS")
    if inst.objective_constant != 0.0:
        lines.append(f"    RHS obj {_fmt(-inst.objective_constant)}")
    for row in inst.rows:
        if row.rhs != 0.0:
            lines.append(f"    RHS {row.name} {_fmt(row.rhs)}")
    ranged = [row for row in inst.rows if row.sense == "R"]
    if ranged:
        lines.append("RANGES")
        for row in ranged:
            lines.append(f"    RNG {row.name} {_fmt(row.range)}")
    lines.append("BOUNDS")
    for var in inst.variables:
        lo, up = var.lower, var.upper
        if lo == up:
            lines.append(f" FX BND {var.name} {_fmt(lo)}")
            continue
        if lo == -INF and up == INF:
            lines.append(f" FR BND {var.name}")
            continue
        if lo == -INF:
            lines.append(f" MI BND {var.name}")
        elif lo != 0.0 or (up != INF and up < 0):
            lines.append(f" LO BND {var.name} {_fmt(lo)}")
        if up != INF:
            lines.append(f" UP BND {var.name} {_fmt(up)}")
        elif var.is_integer:
            lines.append(f" PL BND {var.name}")
    lines.append("ENDATA")
    Path(path).write_text("\n".join(lines) + "\n")


def _fmt_value(v: float) -> str:
    return format(float(v), ".17g")


def format_solution(report: SolutionReport) -> str:
    """``=obj= <objective>`` then ``<name> <value>`` for each nonzero, or a
    single ``=infeas=`` line when no solution was found."""
    if report.status != "feasible":
        return INFEASIBLE_MARKER + "\n"
    lines = [f"=obj= {_fmt_value(report.objective)}"]
    lines += [f"{name} {_fmt_value(v)}" for name, v in report.assignments if v != 0.0]
    return "\n".join(lines) + "\n"


def write_solution(report: SolutionReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(format_solution(report))


def read_solution(path) -> tuple[float | None, dict[str, float]]:
    """Inverse of :func:`write_solution`; ``(None, {})`` for ``=infeas=``."""
    objective = None
    values: dict[str, float] = {}
    with open(path) as fh:
        for line in fh:
            tokens = line.split()
            if not tokens:
                continue
            if tokens[0] == INFEASIBLE_MARKER:
                return None, {}
            if tokens[0] == "=obj=":
                objective = float(tokens[1])
            else:
                values[tokens[0]] = float(tokens[1])
    return objective, values


def parse_best_known(path) -> dict[str, float]:
    """Read a CSV with header ``instance,objective``."""
    out: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"instance", "objective"} <= set(reader.fieldnames):
            raise ScyllaError(f"{os.fspath(path)}: expected header 'instance,objective'")
        for rec in reader:
            key = rec["instance"].strip()
            if key in out:
                raise ScyllaError(f"{os.fspath(path)}: duplicate instance {key!r}")
            out[key] = float(rec["objective"])
    return out


def solution_vector(inst: Instance, values: dict[str, float]) -> np.ndarray:
    """Dense vector over ``inst.variables`` from a name -> value mapping."""
    index = {v.name: j for j, v in enumerate(inst.variables)}
    x = np.zeros(inst.n_vars)
    for name, v in values.items():
        x[index[name]] = v
    return x
