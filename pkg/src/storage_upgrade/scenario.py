"""JSON scenario files driving the chain harness.

A scenario is a JSON list of single-key action objects executed in order.
Each transaction action is sealed in its own block unless grouped in a
``batch``. Assertions stop the run at the first failure.

Transaction actions (all accept ``"expect_error": "<ErrorCode>"``)::

    {"deploy":   {"from", "name", "schema_file" | "schema", "members", "params"?}}
    {"set":      {"from", "contract"?, "access", "value"}}
    {"get":      {"from", "contract"?, "access"}}
    {"propose":  {"from", "contract"?, "schema_file" | "schema" | "params"}}
    {"vote":     {"from", "contract"?, "id"?, "choice"}}
    {"activate": {"from", "contract"?, "id"?, "plan_file"?, "tamper"?}}

Other actions::

    {"accounts": ["alice", ...]}      {"advance": n}      {"batch": [...]}
    {"assert_get": {"contract"?, "access", "equals"}}
    {"assert_slot": {"contract"?, "slot", "equals"}}
    {"assert_phase": "Executable" | {"contract", "equals"}}
    {"assert_status": {"contract"?, "id"?, "equals"}}
    {"assert_version": {"contract"?, "equals"}}
    {"assert_schema": {"contract"?, "schema_file" | "schema"}}
    {"assert_account_count": n}
    {"assert_address_unchanged": "<contract name>"}
    {"assert_no_indirection": true}
    {"assert_no_migration_txs": true}
    {"assert_header_slots": {"contract"?, "equals"}}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .access import element_type, read_element, read_variable
from .analyzer import MigrationPlan, MoveBytes
from .chain import Activate, Chain, Deploy, GetVar, Propose, SetVar, Transaction, TxReceipt, Vote
from .errors import ScenarioParseError, UpgradeError
from .governance import GovernanceParams, ParamChange
from .keccak import keccak256
from .layout import encode_value, parse_access, parse_slot
from .schema import parse_schema
from .store import ZERO_WORD

TX_ACTIONS = {"deploy", "set", "get", "propose", "vote", "activate"}
OTHER_ACTIONS = {
    "accounts", "advance", "batch", "assert_get", "assert_slot", "assert_phase", "assert_status",
    "assert_version", "assert_schema", "assert_account_count", "assert_address_unchanged",
    "assert_no_indirection", "assert_no_migration_txs", "assert_header_slots",
}


class _AssertionFailed(Exception):
    pass


@dataclass
class ScenarioReport:
    scenario: str
    passed: bool = True
    assertions: list[dict] = field(default_factory=list)
    receipts: list[dict] = field(default_factory=list)
    failure: dict | None = None
    slots_read: int = 0
    slots_written: int = 0
    final_block: int = 0
    snapshot_hash: str = ""

    def to_json(self) -> dict:
        out = {
            "scenario": self.scenario,
            "passed": self.passed,
            "assertions": self.assertions,
            "receipts": self.receipts,
            "slots_read": self.slots_read,
            "slots_written": self.slots_written,
            "final_block": self.final_block,
            "snapshot_hash": self.snapshot_hash,
        }
        if self.failure is not None:
            out["failure"] = self.failure
        return out


def load_scenario(path: str | Path) -> list:
    path = Path(path)
    try:
        script = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ScenarioParseError(f"{path}: {exc}") from None
    validate_script(script)
    return script


def validate_script(script) -> None:
    if not isinstance(script, list):
        raise ScenarioParseError("a scenario must be a JSON list of actions")
    for i, action in enumerate(script):
        if not isinstance(action, dict) or len(action) != 1:
            raise ScenarioParseError(f"action {i}: expected an object with exactly one key")
        (kind, body), = action.items()
        if kind not in TX_ACTIONS | OTHER_ACTIONS:
            raise ScenarioParseError(f"action {i}: unknown action {kind!r}")
        if kind in TX_ACTIONS and (not isinstance(body, dict) or "from" not in body):
            raise ScenarioParseError(f"action {i}: {kind!r} needs an object with a 'from' sender")
        if kind == "batch":
            validate_script(body)
            if any(next(iter(a)) not in TX_ACTIONS for a in body):
                raise ScenarioParseError(f"action {i}: batches may only hold transactions")


def _same_value(t, actual, expected) -> bool:
    if isinstance(expected, list):
        return isinstance(actual, list) and len(actual) == len(expected) and all(
            _same_value(t, a, e) for a, e in zip(actual, expected)
        )
    try:
        return encode_value(t, actual) == encode_value(t, expected)
    except UpgradeError:
        return False


class ScenarioRunner:
    def __init__(self, base_dir: str | Path = "."):
        self.base_dir = Path(base_dir)
        self.chain = Chain()
        self.contracts: dict[str, str] = {}  # scenario name -> address
        self.deployed_address: dict[str, str] = {}
        self.plans: dict[tuple[str, int], MigrationPlan] = {}
        self.last_proposal: dict[str, int] = {}
        self.receipts: list[tuple[Transaction, TxReceipt]] = []
        self.propose_marks: list[int] = []
        self.report: ScenarioReport | None = None

    # --- helpers -----------------------------------------------------------

    def _addr(self, label: str) -> str:
        return self.chain.create_account(label)

    def _contract(self, body: dict) -> str:
        name = body.get("contract")
        if name is None:
            if len(self.contracts) != 1:
                raise ScenarioParseError("'contract' is required when several contracts exist")
            name = next(iter(self.contracts))
        try:
            return self.contracts[name]
        except KeyError:
            raise ScenarioParseError(f"unknown contract {name!r}") from None

    def _schema_source(self, body: dict) -> str:
        if "schema" in body:
            return body["schema"]
        if "schema_file" in body:
            try:
                return (self.base_dir / body["schema_file"]).read_text()
            except OSError as exc:
                raise ScenarioParseError(str(exc)) from None
        raise ScenarioParseError("expected 'schema' or 'schema_file'")

    def _proposal_id(self, body: dict, contract: str) -> int:
        if "id" in body:
            return int(body["id"])
        if contract not in self.last_proposal:
            raise ScenarioParseError("no proposal to refer to")
        return self.last_proposal[contract]

    def _record(self, kind: str, passed: bool, detail: str) -> None:
        self.report.assertions.append(
            {"index": self._index, "kind": kind, "passed": passed, "detail": detail}
        )
        if not passed:
            raise _AssertionFailed(detail)

    # --- transactions ------------------------------------------------------

    def _build_tx(self, kind: str, body: dict) -> Transaction:
        sender = self._addr(body["from"])
        if kind == "deploy":
            schema = parse_schema(self._schema_source(body))
            members = tuple(self._addr(m) for m in body.get("members", []))
            params = GovernanceParams.from_json(body.get("params"))
            return Transaction(sender, Deploy(schema, members, params))
        contract = self._contract(body)
        if kind == "set":
            return Transaction(sender, SetVar(contract, body["access"], body["value"]))
        if kind == "get":
            return Transaction(sender, GetVar(contract, body["access"]))
        if kind == "propose":
            if "params" in body:
                return Transaction(sender, Propose(contract, ParamChange(GovernanceParams.from_json(body["params"]))))
            current = self.chain.contract(contract).schema
            new_schema = parse_schema(self._schema_source(body), default_version=current.version + 1)
            upgrade, plan = self.chain.draft_upgrade(contract, new_schema)
            self._pending_plan = plan
            return Transaction(sender, Propose(contract, upgrade))
        if kind == "vote":
            return Transaction(sender, Vote(contract, self._proposal_id(body, contract), body["choice"]))
        if kind == "activate":
            pid = self._proposal_id(body, contract)
            if "plan_file" in body:
                plan = MigrationPlan.loads((self.base_dir / body["plan_file"]).read_text())
            else:
                plan = self.plans.get((contract, pid))
            if plan is not None and body.get("tamper"):
                plan = MigrationPlan(plan.from_version, plan.to_version,
                                     plan.steps + (MoveBytes(0, 0, 1, 0, 1),), plan.warnings)
            return Transaction(sender, Activate(contract, pid, plan))
        raise ScenarioParseError(f"unknown transaction {kind!r}")

    def _run_tx(self, kind: str, body: dict) -> TxReceipt:
        self._pending_plan = None
        tx = self._build_tx(kind, body)
        receipt = self.chain.apply_tx(tx)
        self.receipts.append((tx, receipt))
        self.report.receipts.append({"action": kind, **receipt.to_json()})
        self.report.slots_read += receipt.slots_read
        self.report.slots_written += receipt.slots_written
        if receipt.success:
            if kind == "deploy":
                name = body.get("name", "contract")
                self.contracts[name] = receipt.return_value
                self.deployed_address[name] = receipt.return_value
            elif kind == "propose":
                contract = tx.action.contract
                self.last_proposal[contract] = receipt.return_value
                self.propose_marks.append(len(self.receipts) - 1)
                if self._pending_plan is not None:
                    self.plans[(contract, receipt.return_value)] = self._pending_plan
        expected = body.get("expect_error")
        if expected is not None:
            self._record(f"{kind}:expect_error", receipt.error == expected,
                         f"expected {expected}, got {receipt.error or 'success'}")
        elif not receipt.success:
            self._record(f"{kind}:success", False, f"{receipt.error}: {receipt.message}")
        return receipt

    # --- assertions --------------------------------------------------------

    def _assert(self, kind: str, body) -> None:
        chain = self.chain
        if kind == "assert_get":
            c = chain.contract(self._contract(body))
            # observer read on a copy: no transaction, no gas-proxy counts
            storage = c.storage.copy()
            try:
                access = parse_access(body["access"], c.layout)
                if access.index is None and access.key is None:
                    actual = read_variable(storage, c.layout, access.name)
                else:
                    actual = read_element(storage, c.layout, access)
            except UpgradeError as exc:
                self._record(kind, False, f"{body['access']}: {exc.code} {exc}")
            t = element_type(c.layout, access.name)
            ok = _same_value(t, actual, body["equals"])
            self._record(kind, ok, f"{body['access']} = {actual!r}, expected {body['equals']!r}")
        elif kind == "assert_slot":
            c = chain.contract(self._contract(body))
            word = c.storage.slots.get(parse_slot(body["slot"]), ZERO_WORD)
            expected = int(body["equals"], 0) if isinstance(body["equals"], str) else int(body["equals"])
            self._record(kind, int.from_bytes(word, "big") == expected,
                         f"slot {body['slot']} holds 0x{word.hex()}, expected {body['equals']}")
        elif kind == "assert_phase":
            body = {"equals": body} if isinstance(body, str) else body
            c = chain.contract(self._contract(body))
            phase = c.governance.phase.value
            self._record(kind, phase == body["equals"], f"phase {phase}, expected {body['equals']}")
        elif kind == "assert_status":
            address = self._contract(body)
            p = chain.contract(address).governance.proposal(self._proposal_id(body, address))
            self._record(kind, p.status.value == body["equals"], f"proposal {p.id} is {p.status.value}, expected {body['equals']}")
        elif kind == "assert_version":
            c = chain.contract(self._contract(body))
            self._record(kind, c.schema.version == body["equals"], f"version {c.schema.version}, expected {body['equals']}")
        elif kind == "assert_schema":
            c = chain.contract(self._contract(body))
            expected = parse_schema(self._schema_source(body), default_version=c.schema.version)
            same = (expected.contract_name, expected.variables) == (c.schema.contract_name, c.schema.variables)
            self._record(kind, same, f"deployed schema {c.schema.names} vs expected {expected.names}")
        elif kind == "assert_account_count":
            self._record(kind, chain.account_count == body, f"{chain.account_count} accounts, expected {body}")
        elif kind == "assert_address_unchanged":
            address = self.contracts.get(body)
            account = chain.accounts.get(address)
            ok = address == self.deployed_address.get(body) and account is not None and account.address == address
            self._record(kind, ok, f"contract {body!r} at {address}")
        elif kind == "assert_no_indirection":
            cross = sum(r.cross_account_reads for _, r in self.receipts)
            self._record(kind, cross == 0, f"{cross} cross-account reads")
        elif kind == "assert_no_migration_txs":
            start = self.propose_marks[0] if self.propose_marks else len(self.receipts)
            writes = [i for i, (tx, _) in enumerate(self.receipts) if i > start and isinstance(tx.action, SetVar)]
            self._record(kind, not writes, f"{len(writes)} user writes after the upgrade proposal")
        elif kind == "assert_header_slots":
            c = chain.contract(self._contract(body))
            used = c.layout.slots_used_header
            self._record(kind, used == body["equals"], f"{used} header slots, expected {body['equals']}")

    # --- driver ------------------------------------------------------------

    def _run_action(self, action: dict) -> None:
        (kind, body), = action.items()
        if kind in TX_ACTIONS:
            self._run_tx(kind, body)
            self.chain.advance_block(1)
        elif kind == "batch":
            for inner in body:
                (ikind, ibody), = inner.items()
                self._run_tx(ikind, ibody)
            self.chain.advance_block(1)
        elif kind == "accounts":
            for label in body:
                self._addr(label)
        elif kind == "advance":
            self.chain.advance_block(int(body))
        else:
            self._assert(kind, body)

    def run(self, script: list, name: str = "<scenario>") -> ScenarioReport:
        validate_script(script)
        self.report = ScenarioReport(name)
        for i, action in enumerate(script):
            self._index = i
            try:
                self._run_action(action)
            except _AssertionFailed as exc:
                self.report.passed = False
                self.report.failure = {"index": i, "action": action, "detail": str(exc)}
                break
            except (KeyError, TypeError, ValueError) as exc:
                raise ScenarioParseError(f"action {i} {action!r}: {exc}") from None
            except UpgradeError as exc:
                # raised outside a transaction, e.g. a schema file that does not parse
                self.report.passed = False
                self.report.failure = {"index": i, "action": action, "detail": f"{exc.code}: {exc}"}
                break
        self.report.final_block = self.chain.current_block
        self.report.snapshot_hash = "0x" + keccak256(self.chain.snapshot_json().encode()).hex()
        return self.report


def run_scenario(script_or_path, base_dir: str | Path | None = None) -> tuple[ScenarioReport, Chain]:
    """Run a scenario given as a path or an already-loaded action list."""
    if isinstance(script_or_path, (str, Path)):
        path = Path(script_or_path)
        script = load_scenario(path)
        runner = ScenarioRunner(base_dir or path.parent)
        return runner.run(script, str(path)), runner.chain
    runner = ScenarioRunner(base_dir or ".")
    return runner.run(script_or_path), runner.chain


def bundled_scenarios() -> dict[str, Path]:
    here = Path(__file__).parent / "scenarios"
    return {p.stem: p for p in sorted(here.glob("*.scenario"))}
