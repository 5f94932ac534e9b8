"""Exception hierarchy.

Every error carries a stable ``code`` (the class name) so chain receipts and
CLI diagnostics can report failures without leaking Python tracebacks.
"""


class UpgradeError(Exception):
    """Base class for all errors raised by this package."""

    @property
    def code(self) -> str:
        return type(self).__name__


# schema
class SchemaSyntaxError(UpgradeError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


class DuplicateVariable(UpgradeError):
    pass


class UnsupportedType(UpgradeError):
    pass


# layout / values
class UnknownVariable(UpgradeError):
    pass


class IndexOutOfBounds(UpgradeError):
    pass


class AccessShapeMismatch(UpgradeError):
    pass


class InvalidValue(UpgradeError):
    pass


# store
class RangeError(UpgradeError):
    pass


class SnapshotError(UpgradeError):
    pass


# analyzer / reorganizer
class VersionMismatch(UpgradeError):
    pass


class PlanCorrupt(UpgradeError):
    pass


class ScratchNotRestored(UpgradeError):
    pass


# governance
class NotStakeholder(UpgradeError):
    pass


class ProposalInFlight(UpgradeError):
    pass


class WrongPhase(UpgradeError):
    pass


class AlreadyVoted(UpgradeError):
    pass


class VotingClosed(UpgradeError):
    pass


class UnknownProposal(UpgradeError):
    pass


class NotApproved(UpgradeError):
    pass


class PlanHashMismatch(UpgradeError):
    pass


class InvalidParams(UpgradeError):
    pass


# chain
class ContractHalted(UpgradeError):
    pass


class UnknownAccount(UpgradeError):
    pass


class ScenarioParseError(UpgradeError):
    pass
