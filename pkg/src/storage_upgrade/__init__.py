"""Storage layouts, migration plans and governed in-place upgrades for
Ethereum-style contract storage."""

from .analyzer import MigrationPlan, diff_layouts, plan_touched_slots
from .chain import Chain
from .governance import ContractPhase, Governance, GovernanceParams, ProposalStatus
from .layout import compute_layout, dyn_array_data_base, locate, mapping_value_slot
from .reorganizer import apply_plan, verify_post_state
from .schema import parse_schema, render_schema
from .store import ContractStorage

__all__ = [
    "Chain",
    "ContractPhase",
    "ContractStorage",
    "Governance",
    "GovernanceParams",
    "MigrationPlan",
    "ProposalStatus",
    "apply_plan",
    "compute_layout",
    "diff_layouts",
    "dyn_array_data_base",
    "locate",
    "mapping_value_slot",
    "parse_schema",
    "plan_touched_slots",
    "render_schema",
    "verify_post_state",
]
