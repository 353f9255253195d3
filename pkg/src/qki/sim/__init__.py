"""Block compression protocols, their exact fidelities, and the converse audit."""

from .audit import AuditStep, audit_converse_chain, check_slacks, delta_term
from .code import (
    CodeInstance,
    TypicalSubspace,
    code_fidelity,
    copy_data,
    retained_count,
    schumacher_code,
    top_indices,
    typical_projector,
)
from .protocols import (
    SimulationReport,
    assisted_channel,
    assisted_plan,
    cq_eigenbasis,
    reconstruct_N_channel,
    run_assisted,
    run_schumacher_control,
    run_unassisted,
    unassisted_code,
)

__all__ = [
    "AuditStep",
    "CodeInstance",
    "SimulationReport",
    "TypicalSubspace",
    "assisted_channel",
    "assisted_plan",
    "audit_converse_chain",
    "check_slacks",
    "code_fidelity",
    "copy_data",
    "cq_eigenbasis",
    "delta_term",
    "reconstruct_N_channel",
    "retained_count",
    "run_assisted",
    "run_schumacher_control",
    "run_unassisted",
    "schumacher_code",
    "top_indices",
    "typical_projector",
    "unassisted_code",
]
