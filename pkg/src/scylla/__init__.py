"""Matrix-free primal heuristic for mixed-integer linear programs."""

from __future__ import annotations

from scylla.errors import InfeasibleInstanceError, InstanceError, MpsError, NumericalError, ScyllaError
from scylla.io import SolutionReport, parse_mps, write_mps, write_solution
from scylla.model import Instance, Row, SparseMatrix, StandardForm, Variable, cleanup, to_standard_form
from scylla.pdhg import TerminationKind, kkt_residual, solve_lp
from scylla.propagate import check_mip_feasible, fix_and_propagate
from scylla.pump import PumpParams, advance_tolerance, solve, update_objective

__version__ = "0.1.0"

__all__ = [
    "InfeasibleInstanceError", "InstanceError", "Instance", "MpsError", "NumericalError", "PumpParams", "Row",
    "ScyllaError", "SolutionReport", "SparseMatrix", "StandardForm", "TerminationKind", "Variable",
    "advance_tolerance", "check_mip_feasible", "cleanup", "fix_and_propagate", "kkt_residual", "parse_mps",
    "solve", "solve_lp", "to_standard_form", "update_objective", "write_mps", "write_solution",
]
