"""Exhaustive vote-sequence exploration of the governance state machine."""

from __future__ import annotations

from itertools import permutations, product

from storage_upgrade.errors import VotingClosed
from storage_upgrade.governance import (
    Choice,
    ContractPhase,
    Governance,
    GovernanceParams,
    ProposalStatus,
    Upgrade,
)
from storage_upgrade.schema import parse_schema

S = ProposalStatus
P = ContractPhase
STATUS_EDGES = {
    (S.VOTING, S.REJECTED),
    (S.VOTING, S.EXPIRED),
    (S.VOTING, S.APPROVED_PENDING),
    (S.APPROVED_PENDING, S.APPLIED),
}
PHASE_EDGES = {
    (P.EXECUTABLE, P.VOTING_OPEN),
    (P.VOTING_OPEN, P.EXECUTABLE),
    (P.VOTING_OPEN, P.NON_EXECUTABLE),
    (P.NON_EXECUTABLE, P.EXECUTABLE),
}
_V2 = parse_schema("contract C version 2 { uint256 a; }")
_HASH = b"\x07" * 32


class _Contract:
    def apply_upgrade(self, schema, plan):
        return "applied"


class _Plan:
    plan_hash = _HASH


def vote_sequences(n: int):
    """Every ordered sequence of distinct voters with a yes/no choice each."""
    members = [f"m{i}" for i in range(n)]
    for k in range(n + 1):
        for voters in permutations(members, k):
            for choices in product((Choice.YES, Choice.NO), repeat=k):
                yield list(zip(voters, choices))


def run_one(n: int, sequence, params: GovernanceParams, offset: int = 0) -> list[str]:
    """Replay one sequence, vote ``i`` cast in block ``offset + i``; return violations."""
    g = Governance([f"m{i}" for i in range(n)], params)
    problems: list[str] = []
    phases = [g.phase]

    def phase_step(where):
        if g.phase is not phases[-1]:
            if (phases[-1], g.phase) not in PHASE_EDGES:
                problems.append(f"{where}: phase {phases[-1].value} -> {g.phase.value}")
            phases.append(g.phase)

    pid = g.submit_proposal("m0", Upgrade(_V2, _HASH), 0)
    phase_step("submit")
    deadline = g.proposal(pid).deadline
    sealed = 0

    def seal_until(block):
        nonlocal sealed
        while sealed < block:
            sealed += 1
            halted_before = g.phase is P.NON_EXECUTABLE
            g.on_block(sealed)
            phase_step(f"block {sealed}")
            if halted_before and g.is_executable():
                problems.append("halt lifted by a block")

    for i, (voter, choice) in enumerate(sequence):
        block = offset + i
        seal_until(block)
        was_voting = g.proposal(pid).status is S.VOTING
        halted_before = g.phase is P.NON_EXECUTABLE
        try:
            g.cast_vote(voter, pid, choice, block)
            if not was_voting:
                problems.append(f"vote accepted after resolution at block {block}")
        except VotingClosed:
            if was_voting:
                problems.append(f"vote refused while voting at block {block}")
        phase_step(f"vote {block}")
        if halted_before and g.is_executable():
            problems.append("halt lifted by a vote")
    seal_until(max(deadline, sealed))
    p = g.proposal(pid)
    if p.status is S.VOTING:
        problems.append("still voting after the deadline")
    if p.status is S.APPROVED_PENDING:
        if g.is_executable():
            problems.append("approved but still executable")
        g.activate("m0", pid, _Contract(), _Plan(), deadline)
        phase_step("activate")
    for change in g.history:
        if (change.old, change.new) not in STATUS_EDGES:
            problems.append(f"status {change.old.value} -> {change.new.value}")
    final = p.status
    if final is S.APPLIED:
        ok = g.phase is P.EXECUTABLE and g.version == 2
    elif final in (S.REJECTED, S.EXPIRED):
        ok = g.phase is P.EXECUTABLE and g.version == 1
    else:
        ok = False
    if not ok:
        problems.append(f"ended {final.value} in phase {g.phase.value}")
    if final is S.APPLIED and not p.yes:
        problems.append("applied without yes votes")
    return problems


def explore(n: int, params: GovernanceParams | None = None, offsets=None) -> tuple[int, list]:
    """Run every sequence at each block offset.

    The default offsets start voting at genesis, end it exactly on the last
    open block, and push the tail past the deadline.
    """
    params = params or GovernanceParams()
    d = params.voting_deadline_blocks
    offsets = offsets if offsets is not None else sorted({0, max(d - n, 0), max(d - 2, 0)})
    runs, bad = 0, []
    for seq in vote_sequences(n):
        for offset in offsets:
            runs += 1
            problems = run_one(n, seq, params, offset)
            if problems:
                bad.append((seq, offset, problems))
    return runs, bad
