"""Voting-based upgrade lifecycle for a single contract.

Proposal lifecycle and contract phase::

    Executable --submit--> VotingOpen
    VotingOpen --rejected / expired--> Executable        (previous version stays)
    VotingOpen --approved--> NonExecutable                (awaiting activation)
    VotingOpen --halt threshold reached--> NonExecutable
    NonExecutable --activate--> Executable                (new version / params)

Only one proposal may be in flight (Voting or ApprovedPending) at a time.
Deadlines are block numbers: votes are accepted while
``current_block < created_block + voting_deadline_blocks`` and the proposal is
resolved by :meth:`Governance.on_block` once that block is reached.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Union

from .errors import (
    AlreadyVoted,
    InvalidParams,
    NotApproved,
    NotStakeholder,
    PlanHashMismatch,
    ProposalInFlight,
    UnknownProposal,
    VotingClosed,
    WrongPhase,
)
from .schema import ContractSchema, render_schema


class ProposalStatus(enum.Enum):
    VOTING = "Voting"
    REJECTED = "Rejected"
    APPROVED_PENDING = "ApprovedPending"
    APPLIED = "Applied"
    EXPIRED = "Expired"


class ContractPhase(enum.Enum):
    EXECUTABLE = "Executable"
    VOTING_OPEN = "VotingOpen"
    NON_EXECUTABLE = "NonExecutable"


class Choice(enum.Enum):
    YES = "yes"
    NO = "no"


def _fraction(value) -> Fraction:
    try:
        return Fraction(value) if not isinstance(value, float) else Fraction(value).limit_denominator(10**6)
    except (TypeError, ValueError, ZeroDivisionError):
        raise InvalidParams(f"{value!r} is not a rational number") from None


@dataclass(frozen=True)
class GovernanceParams:
    voting_deadline_blocks: int = 20
    approval_threshold: Fraction = Fraction(1, 2)
    halt_threshold: Fraction = Fraction(2, 3)
    quorum: Fraction = Fraction(1, 2)

    def __post_init__(self):
        for name in ("approval_threshold", "halt_threshold", "quorum"):
            object.__setattr__(self, name, _fraction(getattr(self, name)))
        if not isinstance(self.voting_deadline_blocks, int) or self.voting_deadline_blocks < 1:
            raise InvalidParams("voting_deadline_blocks must be an integer >= 1")
        if not 0 < self.approval_threshold <= 1:
            raise InvalidParams("approval_threshold must lie in (0, 1]")
        if not 0 < self.halt_threshold <= 1:
            raise InvalidParams("halt_threshold must lie in (0, 1]")
        if not 0 <= self.quorum <= 1:
            raise InvalidParams("quorum must lie in [0, 1]")
        if self.halt_threshold < self.approval_threshold:
            raise InvalidParams("halt_threshold must be >= approval_threshold")

    def to_json(self) -> dict:
        return {
            "voting_deadline_blocks": self.voting_deadline_blocks,
            "approval_threshold": str(self.approval_threshold),
            "halt_threshold": str(self.halt_threshold),
            "quorum": str(self.quorum),
        }

    @classmethod
    def from_json(cls, data: dict | None) -> GovernanceParams:
        data = dict(data or {})
        unknown = set(data) - {"voting_deadline_blocks", "approval_threshold", "halt_threshold", "quorum"}
        if unknown:
            raise InvalidParams(f"unknown governance parameters {sorted(unknown)}")
        return replace(cls(), **data) if data else cls()


@dataclass(frozen=True)
class Upgrade:
    new_schema: ContractSchema
    plan_hash: bytes

    def to_json(self) -> dict:
        return {"type": "upgrade", "schema": render_schema(self.new_schema), "plan_hash": "0x" + self.plan_hash.hex()}


@dataclass(frozen=True)
class ParamChange:
    new_params: GovernanceParams

    def to_json(self) -> dict:
        return {"type": "param_change", "params": self.new_params.to_json()}


ProposalKind = Union[Upgrade, ParamChange]


@dataclass
class Proposal:
    id: int
    kind: ProposalKind
    proposer: str
    created_block: int
    deadline: int
    votes: dict[str, Choice] = field(default_factory=dict)
    status: ProposalStatus = ProposalStatus.VOTING
    halted: bool = False

    @property
    def yes(self) -> int:
        return sum(1 for c in self.votes.values() if c is Choice.YES)

    @property
    def no(self) -> int:
        return sum(1 for c in self.votes.values() if c is Choice.NO)

    def to_json(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.to_json(),
            "proposer": self.proposer,
            "created_block": self.created_block,
            "deadline": self.deadline,
            "votes": {k: v.value for k, v in sorted(self.votes.items())},
            "status": self.status.value,
            "halted": self.halted,
        }


@dataclass(frozen=True)
class StatusChange:
    proposal_id: int
    old: ProposalStatus
    new: ProposalStatus
    block: int


@dataclass(frozen=True)
class ParamChangeAck:
    proposal_id: int
    params: GovernanceParams


IN_FLIGHT = (ProposalStatus.VOTING, ProposalStatus.APPROVED_PENDING)


class Governance:
    """Stakeholder registry, parameters, proposals and phase of one contract."""

    def __init__(self, members, params: GovernanceParams | None = None, version: int = 1):
        self.members: frozenset[str] = frozenset(members)
        if not self.members:
            raise InvalidParams("a contract needs at least one stakeholder")
        self.params = params or GovernanceParams()
        self.proposals: dict[int, Proposal] = {}
        self.phase = ContractPhase.EXECUTABLE
        self.version = version
        self.history: list[StatusChange] = []

    # --- queries -----------------------------------------------------------

    def is_executable(self) -> bool:
        return self.phase is not ContractPhase.NON_EXECUTABLE

    def in_flight(self) -> Proposal | None:
        for p in self.proposals.values():
            if p.status in IN_FLIGHT:
                return p
        return None

    def proposal(self, proposal_id: int) -> Proposal:
        try:
            return self.proposals[proposal_id]
        except KeyError:
            raise UnknownProposal(f"no proposal {proposal_id}") from None

    def _require_member(self, account: str) -> None:
        if account not in self.members:
            raise NotStakeholder(f"{account} is not a stakeholder")

    # --- transitions -------------------------------------------------------

    def _set_status(self, p: Proposal, status: ProposalStatus, block: int) -> StatusChange:
        change = StatusChange(p.id, p.status, status, block)
        p.status = status
        self.history.append(change)
        if status is ProposalStatus.APPROVED_PENDING:
            self.phase = ContractPhase.NON_EXECUTABLE
        elif status in (ProposalStatus.REJECTED, ProposalStatus.EXPIRED):
            self.phase = ContractPhase.EXECUTABLE
        return change

    def submit_proposal(self, proposer: str, kind: ProposalKind, current_block: int) -> int:
        self._require_member(proposer)
        if self.in_flight() is not None:
            raise ProposalInFlight("another proposal is still in flight")
        if self.phase is not ContractPhase.EXECUTABLE:
            raise WrongPhase(f"cannot propose while contract is {self.phase.value}")
        if isinstance(kind, Upgrade) and kind.new_schema.version != self.version + 1:
            raise InvalidParams(
                f"upgrade targets version {kind.new_schema.version}, expected {self.version + 1}"
            )
        pid = len(self.proposals) + 1
        self.proposals[pid] = Proposal(
            pid, kind, proposer, current_block, current_block + self.params.voting_deadline_blocks
        )
        self.phase = ContractPhase.VOTING_OPEN
        return pid

    def cast_vote(self, voter: str, proposal_id: int, choice: Choice, current_block: int) -> ProposalStatus:
        self._require_member(voter)
        p = self.proposal(proposal_id)
        if p.status is not ProposalStatus.VOTING or current_block >= p.deadline:
            raise VotingClosed(f"proposal {proposal_id} is not accepting votes")
        if voter in p.votes:
            raise AlreadyVoted(f"{voter} already voted on proposal {proposal_id}")
        p.votes[voter] = Choice(choice)
        n = len(self.members)
        if p.yes >= self.params.halt_threshold * n:
            p.halted = True
            self.phase = ContractPhase.NON_EXECUTABLE
        if p.yes >= self.params.approval_threshold * n:
            self._set_status(p, ProposalStatus.APPROVED_PENDING, current_block)
        elif p.no > (1 - self.params.approval_threshold) * n:
            self._set_status(p, ProposalStatus.REJECTED, current_block)
        return p.status

    def on_block(self, current_block: int) -> list[StatusChange]:
        changes = []
        for p in self.proposals.values():
            if p.status is ProposalStatus.VOTING and current_block >= p.deadline:
                cast = len(p.votes)
                n = len(self.members)
                approved = (
                    cast > 0
                    and Fraction(cast, n) >= self.params.quorum
                    and p.yes >= self.params.approval_threshold * cast
                )
                status = ProposalStatus.APPROVED_PENDING if approved else ProposalStatus.EXPIRED
                changes.append(self._set_status(p, status, current_block))
        return changes

    def check_activation(self, caller: str, proposal_id: int, plan_hash: bytes | None = None) -> Proposal:
        """Validate an activation without mutating anything."""
        self._require_member(caller)
        p = self.proposal(proposal_id)
        if p.status is not ProposalStatus.APPROVED_PENDING:
            raise NotApproved(f"proposal {proposal_id} is {p.status.value}, not approved")
        if isinstance(p.kind, Upgrade) and plan_hash != p.kind.plan_hash:
            raise PlanHashMismatch("supplied plan does not match the approved plan hash")
        return p

    def activate(self, caller: str, proposal_id: int, contract=None, plan=None, current_block: int = 0):
        """Final transaction of the lifecycle.

        For upgrades ``contract`` must provide ``apply_upgrade(schema, plan)``
        returning an ``ApplyReport``; the chain's contract accounts do.
        """
        p = self.check_activation(caller, proposal_id, plan.plan_hash if plan is not None else None)
        if isinstance(p.kind, Upgrade):
            result = contract.apply_upgrade(p.kind.new_schema, plan)
            self.version = p.kind.new_schema.version
        else:
            self.params = p.kind.new_params
            result = ParamChangeAck(p.id, self.params)
        self._set_status(p, ProposalStatus.APPLIED, current_block)
        self.phase = ContractPhase.EXECUTABLE
        return result

    # --- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        return {
            "params": self.params.to_json(),
            "members": sorted(self.members),
            "phase": self.phase.value,
            "version": self.version,
            "proposals": [p.to_json() for p in self.proposals.values()],
        }
