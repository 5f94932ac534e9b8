"""Deterministic single-node chain harness.

Accounts, a block counter and serialized transactions. Contract state lives
in exactly one account whose address is fixed at deploy time; upgrades rewrite
that account's schema and storage in place. There is no monetary gas: receipts
carry slot read/write counts instead.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Union

from .access import element_type, read_element, read_variable, write_element, write_variable
from .analyzer import MigrationPlan, diff_layouts
from .errors import ContractHalted, InvalidParams, UnknownAccount, UpgradeError, VersionMismatch
from .governance import Choice, Governance, GovernanceParams, ParamChange, Upgrade
from .keccak import keccak256
from .layout import StorageLayout, VariableAccess, compute_layout, parse_access
from .reorganizer import ApplyReport, apply_plan
from .schema import ContractSchema, render_schema
from .store import ContractStorage, dump_json

log = logging.getLogger(__name__)


# --- transactions ----------------------------------------------------------


@dataclass(frozen=True)
class Deploy:
    schema: ContractSchema
    members: tuple[str, ...]
    params: GovernanceParams = field(default_factory=GovernanceParams)


@dataclass(frozen=True)
class SetVar:
    contract: str
    access: Union[str, VariableAccess]
    value: object


@dataclass(frozen=True)
class GetVar:
    contract: str
    access: Union[str, VariableAccess]


@dataclass(frozen=True)
class Propose:
    contract: str
    kind: Union[Upgrade, ParamChange]


@dataclass(frozen=True)
class Vote:
    contract: str
    proposal_id: int
    choice: Choice


@dataclass(frozen=True)
class Activate:
    contract: str
    proposal_id: int
    plan: MigrationPlan | None = None


Action = Union[Deploy, SetVar, GetVar, Propose, Vote, Activate]


@dataclass(frozen=True)
class Transaction:
    sender: str
    action: Action


@dataclass
class TxReceipt:
    success: bool
    block: int
    return_value: object = None
    error: str | None = None
    message: str = ""
    slots_read: int = 0
    slots_written: int = 0
    cross_account_reads: int = 0
    apply_report: ApplyReport | None = None

    def to_json(self) -> dict:
        out = {
            "success": self.success,
            "block": self.block,
            "slots_read": self.slots_read,
            "slots_written": self.slots_written,
            "cross_account_reads": self.cross_account_reads,
        }
        if self.error:
            out.update(error=self.error, message=self.message)
        if self.return_value is not None:
            out["return_value"] = _jsonable(self.return_value)
        if self.apply_report is not None:
            out["apply_report"] = self.apply_report.to_json()
        return out


def _jsonable(value):
    if isinstance(value, bytes):
        return "0x" + value.hex()
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if hasattr(value, "to_json"):
        return value.to_json()
    return value


# --- accounts --------------------------------------------------------------


def address_for_label(label: str) -> str:
    return "0x" + keccak256(label.encode()).hex()[-40:]


def contract_address(deployer: str, nonce: int) -> str:
    preimage = bytes.fromhex(deployer[2:]) + nonce.to_bytes(32, "big")
    return "0x" + keccak256(preimage).hex()[-40:]


@dataclass
class StakeholderAccount:
    address: str
    label: str
    nonce: int = 0

    def to_json(self) -> dict:
        return {"kind": "stakeholder", "label": self.label, "nonce": self.nonce}


@dataclass
class ContractAccount:
    address: str
    deployer: str
    schema: ContractSchema
    governance: Governance
    storage: ContractStorage = field(default_factory=ContractStorage)
    layout: StorageLayout = field(init=False)

    def __post_init__(self):
        self.layout = compute_layout(self.schema)
        self.storage.version = self.schema.version

    def apply_upgrade(self, new_schema: ContractSchema, plan: MigrationPlan) -> ApplyReport:
        if plan.to_version != new_schema.version:
            raise VersionMismatch(f"plan targets version {plan.to_version}, schema is {new_schema.version}")
        report = apply_plan(self.storage, plan)
        self.schema = new_schema
        self.layout = compute_layout(new_schema)
        return report

    def to_json(self) -> dict:
        return {
            "kind": "contract",
            "deployer": self.deployer,
            "schema": render_schema(self.schema),
            "storage": self.storage.to_snapshot(),
            "governance": self.governance.to_json(),
        }


Account = Union[StakeholderAccount, ContractAccount]


# --- chain -----------------------------------------------------------------


class Chain:
    def __init__(self):
        self.current_block = 0
        self.accounts: dict[str, Account] = {}
        # every state mutation, in order; replaying it rebuilds the chain
        self.journal: list[tuple] = []

    @property
    def tx_log(self) -> list[tuple[int, Transaction]]:
        return [(entry[1], entry[2]) for entry in self.journal if entry[0] == "tx"]

    @property
    def account_count(self) -> int:
        return len(self.accounts)

    def create_account(self, label: str) -> str:
        address = address_for_label(label)
        if address not in self.accounts:
            self.accounts[address] = StakeholderAccount(address, label)
            self.journal.append(("account", label))
        return address

    def contract(self, address: str) -> ContractAccount:
        account = self.accounts.get(address)
        if not isinstance(account, ContractAccount):
            raise UnknownAccount(f"no contract at {address}")
        return account

    def contracts(self) -> list[ContractAccount]:
        return [a for a in self.accounts.values() if isinstance(a, ContractAccount)]

    # --- blocks ------------------------------------------------------------

    def advance_block(self, n: int = 1) -> list:
        if not isinstance(n, int) or n < 1:
            raise ValueError("advance_block needs n >= 1")
        self.journal.append(("advance", n))
        changes = []
        for _ in range(n):
            self.current_block += 1
            for c in self.contracts():
                changes.extend(c.governance.on_block(self.current_block))
        return changes

    def submit(self, tx: Transaction) -> TxReceipt:
        """Apply ``tx`` in the current block, then seal the block."""
        receipt = self.apply_tx(tx)
        self.advance_block(1)
        return receipt

    # --- transactions ------------------------------------------------------

    def apply_tx(self, tx: Transaction) -> TxReceipt:
        self.journal.append(("tx", self.current_block, tx))
        before = {c.address: (c.storage.read_count, c.storage.write_count) for c in self.contracts()}
        receipt = TxReceipt(success=True, block=self.current_block)
        target = getattr(tx.action, "contract", None)
        try:
            if tx.sender not in self.accounts:
                raise UnknownAccount(f"unknown sender {tx.sender}")
            receipt.return_value = self._dispatch(tx.sender, tx.action, receipt)
        except UpgradeError as exc:
            receipt.success, receipt.error, receipt.message = False, exc.code, str(exc)
            log.debug("tx from %s failed: %s", tx.sender, exc)
        for c in self.contracts():
            reads, writes = before.get(c.address, (0, 0))
            d_read, d_write = c.storage.read_count - reads, c.storage.write_count - writes
            receipt.slots_read += d_read
            receipt.slots_written += d_write
            if c.address != target and isinstance(tx.action, (SetVar, GetVar)):
                receipt.cross_account_reads += d_read
        return receipt

    def _dispatch(self, sender: str, action: Action, receipt: TxReceipt):
        if isinstance(action, Deploy):
            return self._deploy(sender, action)
        contract = self.contract(action.contract)
        gov = contract.governance
        if isinstance(action, (SetVar, GetVar)):
            if not gov.is_executable():
                raise ContractHalted(f"contract {contract.address} is non-executable")
            access = action.access
            if isinstance(access, str):
                access = parse_access(access, contract.layout)
            whole = access.index is None and access.key is None
            if isinstance(action, GetVar):
                if whole:
                    return read_variable(contract.storage, contract.layout, access.name)
                return read_element(contract.storage, contract.layout, access)
            if whole:
                write_variable(contract.storage, contract.layout, access.name, action.value)
            else:
                write_element(contract.storage, contract.layout, access, action.value)
            return None
        if isinstance(action, Propose):
            return gov.submit_proposal(sender, action.kind, self.current_block)
        if isinstance(action, Vote):
            return gov.cast_vote(sender, action.proposal_id, Choice(action.choice), self.current_block).value
        if isinstance(action, Activate):
            result = gov.activate(sender, action.proposal_id, contract, action.plan, self.current_block)
            if isinstance(result, ApplyReport):
                receipt.apply_report = result
                return None
            return result.params
        raise UnknownAccount(f"unsupported action {action!r}")

    def _deploy(self, sender: str, action: Deploy) -> str:
        for m in action.members:
            if m not in self.accounts:
                raise UnknownAccount(f"stakeholder {m} has no account")
        if not action.members:
            raise InvalidParams("a contract needs at least one stakeholder")
        deployer = self.accounts[sender]
        if not isinstance(deployer, StakeholderAccount):
            raise UnknownAccount("contracts cannot deploy contracts")
        address = contract_address(sender, deployer.nonce)
        deployer.nonce += 1
        gov = Governance(action.members, action.params, version=action.schema.version)
        self.accounts[address] = ContractAccount(address, sender, action.schema, gov)
        return address

    # --- off-chain helpers -------------------------------------------------

    def draft_upgrade(self, contract: str, new_schema: ContractSchema) -> tuple[Upgrade, MigrationPlan]:
        """Run the analyzer off-chain and bind its plan hash into a proposal kind."""
        current = self.contract(contract).schema
        if new_schema.version == current.version:
            new_schema = new_schema.with_version(current.version + 1)
        plan = diff_layouts(current, new_schema)
        return Upgrade(new_schema, plan.plan_hash), plan

    def value_type(self, contract: str, access: str):
        c = self.contract(contract)
        return element_type(c.layout, parse_access(access, c.layout).name)

    # --- snapshots ---------------------------------------------------------

    def snapshot(self) -> dict:
        return {
            "block": self.current_block,
            "tx_count": len(self.tx_log),
            "accounts": {addr: self.accounts[addr].to_json() for addr in sorted(self.accounts)},
        }

    def snapshot_json(self) -> str:
        return dump_json(self.snapshot())

    @classmethod
    def replay(cls, journal) -> Chain:
        chain = cls()
        for entry in journal:
            if entry[0] == "account":
                chain.create_account(entry[1])
            elif entry[0] == "advance":
                chain.advance_block(entry[1])
            else:
                _, block, tx = entry
                if block != chain.current_block:
                    raise ValueError(f"journal out of order: tx at block {block}, chain at {chain.current_block}")
                chain.apply_tx(tx)
        return chain
