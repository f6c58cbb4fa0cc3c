"""Exact discrete optimal transport and the ensemble-transform operator."""

from setsmc.transport.solver import (
    CostMatrix,
    Coupling,
    build_cost_matrix,
    save_coupling_csv,
    solve_discrete_ot,
)
from setsmc.transport.transform import apply_bayes_transform, ensemble_transform

__all__ = [
    "CostMatrix",
    "Coupling",
    "build_cost_matrix",
    "save_coupling_csv",
    "solve_discrete_ot",
    "apply_bayes_transform",
    "ensemble_transform",
]
