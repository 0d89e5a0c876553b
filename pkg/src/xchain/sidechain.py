"""Per-sidechain ledger: contracts as native handlers over key-value
storage, lock states with provisional overlays, account balances and
nonces, and the engine that matches emitted crosschain calls against
the signed transaction tree.

Contracts are deterministic python functions registered by handler id
(the protocol, not EVM semantics, is the subject here). A handler runs
against a host that scopes storage access to the target contract and
records all effects in a provisional overlay; base state is only
touched when a lock is finalized with a commit decision, or immediately
for ordinary single-chain transactions.
"""

import enum
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple

from .hashing import keccak256
from .wire import (
    CrosschainTransaction,
    SidechainId,
    TxType,
    decode_call,
)

# execution failure reason codes (shared vocabulary with the protocol engine)
LOCK_CONTENTION = "lock-contention"
NOT_LOCKABLE = "not-lockable"
NOT_LOCKED = "not-locked"
CALL_MISMATCH = "call-mismatch"
NONCE_MISMATCH = "nonce-mismatch"
HANDLER_REVERT = "handler-revert"
UNKNOWN_CONTRACT = "unknown-contract"
UNKNOWN_HANDLER = "unknown-handler"
UNKNOWN_SELECTOR = "unknown-selector"
MALFORMED_CALL = "malformed-call-data"
INSUFFICIENT_BALANCE = "insufficient-balance"
VIEW_WRITE = "view-write-forbidden"
LOCKED_VIEW = "view-of-locked-contract"
MISSING_VIEW_RESULT = "missing-view-result"


class ExecutionError(Exception):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class LockStatus(enum.Enum):
    UNLOCKED = "unlocked"
    LOCKED = "locked"


class LockDecision(enum.Enum):
    COMMIT = "commit"
    IGNORE = "ignore"


class LockedViewPolicy(enum.Enum):
    FAIL_IF_LOCKED = "fail"
    ASSUME_IGNORED = "assume-ignored"
    ASSUME_COMMITTED = "assume-committed"


@dataclass(frozen=True)
class LockHolder:
    """Identity of the crosschain transaction holding a contract lock."""

    crosschain_tx_id: object
    originating_sidechain_id: SidechainId
    coordination_ref: Tuple[SidechainId, bytes]

    @classmethod
    def of_tx(cls, tx: CrosschainTransaction) -> "LockHolder":
        return cls(
            crosschain_tx_id=tx.crosschain_tx_id,
            originating_sidechain_id=tx.originating_sidechain_id,
            coordination_ref=(tx.coordination_blockchain_id,
                              tx.coordination_contract_address))


@dataclass
class ProvisionalOverlay:
    """Uncommitted effects of one transaction: storage writes for the
    target contract plus signed balance movements by address."""

    storage_delta: Dict[int, int] = field(default_factory=dict)
    balance_deltas: Dict[bytes, int] = field(default_factory=dict)

    def bump_balance(self, address: bytes, delta: int) -> None:
        self.balance_deltas[address] = self.balance_deltas.get(address, 0) + delta


@dataclass
class LockState:
    status: LockStatus = LockStatus.UNLOCKED
    holder: Optional[LockHolder] = None
    provisional: Optional[ProvisionalOverlay] = None


@dataclass
class Contract:
    address: bytes
    handler_id: str
    lockable: bool
    storage: Dict[int, int] = field(default_factory=dict)
    lock: LockState = field(default_factory=LockState)


@dataclass(frozen=True)
class ExpectedCall:
    is_view: bool
    target_sidechain_id: SidechainId
    to: bytes
    data: bytes
    subtree: Optional[CrosschainTransaction] = None

    def matches(self, is_view: bool, chain: SidechainId, to: bytes,
                data: bytes) -> bool:
        return (self.is_view == is_view and self.target_sidechain_id == chain
                and self.to == to and self.data == data)


@dataclass
class CallFrame:
    """Ordered expectations from the signed tree for one function call,
    plus collected view results keyed by position."""

    expected: List[ExpectedCall]
    cursor: int = 0
    view_results: Dict[int, bytes] = field(default_factory=dict)

    @classmethod
    def for_tx(cls, tx: CrosschainTransaction) -> "CallFrame":
        expected = [
            ExpectedCall(
                is_view=(sub.tx_type is TxType.SUBORDINATE_VIEW),
                target_sidechain_id=sub.target_sidechain_id,
                to=sub.to,
                data=sub.data,
                subtree=sub,
            )
            for sub in tx.subordinates
        ]
        return cls(expected=expected)

    def view_positions(self) -> List[int]:
        return [i for i, e in enumerate(self.expected) if e.is_view]

    def tx_positions(self) -> List[int]:
        return [i for i, e in enumerate(self.expected) if not e.is_view]


EMPTY_FRAME = CallFrame(expected=[])


@dataclass
class ExecutionOutcome:
    overlay: ProvisionalOverlay
    result: bytes = b""
    emitted: List[ExpectedCall] = field(default_factory=list)


def result_bytes(value) -> bytes:
    """Canonical byte form of a handler return value."""
    if value is None:
        return b""
    if isinstance(value, bytes):
        return value
    if isinstance(value, bool):
        return b"\x01" if value else b""
    if isinstance(value, int):
        if value < 0:
            raise ExecutionError(HANDLER_REVERT, "negative result")
        return value.to_bytes((value.bit_length() + 7) // 8, "big") if value else b""
    raise ExecutionError(HANDLER_REVERT, f"unsupported result type {type(value)}")


def result_int(data: bytes) -> int:
    return int.from_bytes(data, "big")


class _Mode(enum.Enum):
    EXECUTE = "execute"   # match emitted calls against the signed frame
    BUILD = "build"       # dry run: record emitted calls
    VIEW = "view"         # read only


class HandlerHost:
    """The interface a native handler sees. Storage access is scoped to
    the executing contract; balance moves and writes land in the
    overlay, never directly in base state."""

    def __init__(self, state: "SidechainState", contract: Contract,
                 overlay: ProvisionalOverlay, frame: CallFrame, mode: _Mode,
                 caller: bytes, value: int,
                 base_overlay: Optional[ProvisionalOverlay] = None,
                 view_executor: Optional[Callable] = None,
                 tx_recorder: Optional[Callable] = None):
        self._state = state
        self._contract = contract
        self._overlay = overlay
        self._frame = frame
        self._mode = mode
        self._base_overlay = base_overlay  # pre-existing lock overlay for reads
        self._view_executor = view_executor
        self._tx_recorder = tx_recorder
        self.caller = caller
        self.value = value
        self.emitted: List[ExpectedCall] = []

    # -- introspection -------------------------------------------------------

    @property
    def self_address(self) -> bytes:
        return self._contract.address

    @property
    def sidechain_id(self) -> SidechainId:
        return self._state.sidechain_id

    # -- storage -------------------------------------------------------------

    def storage_get(self, key: int) -> int:
        if key in self._overlay.storage_delta:
            return self._overlay.storage_delta[key]
        if self._base_overlay is not None and key in self._base_overlay.storage_delta:
            return self._base_overlay.storage_delta[key]
        return self._contract.storage.get(key, 0)

    def storage_set(self, key: int, value: int) -> None:
        self._require_writable("storage write")
        self._overlay.storage_delta[key] = value

    # -- value ---------------------------------------------------------------

    def balance_of(self, address: bytes) -> int:
        base = self._state.balances.get(address, 0)
        if self._base_overlay is not None:
            base += self._base_overlay.balance_deltas.get(address, 0)
        return base + self._overlay.balance_deltas.get(address, 0)

    def transfer(self, to: bytes, amount: int) -> None:
        """Move value out of the executing contract's balance."""
        self._move_value(self._contract.address, to, amount)

    def transfer_from_caller(self, to: bytes, amount: int) -> None:
        """Move value out of the calling account; authority comes from
        that account's signature on the executing transaction."""
        self._move_value(self.caller, to, amount)

    def _move_value(self, src: bytes, dst: bytes, amount: int) -> None:
        self._require_writable("value transfer")
        if amount < 0:
            raise ExecutionError(HANDLER_REVERT, "negative transfer")
        if self.balance_of(src) < amount:
            raise ExecutionError(INSUFFICIENT_BALANCE,
                                 f"{src.hex()} short by {amount - self.balance_of(src)}")
        self._overlay.bump_balance(src, -amount)
        self._overlay.bump_balance(dst, amount)

    def _require_writable(self, what: str) -> None:
        if self._mode is _Mode.VIEW:
            raise ExecutionError(VIEW_WRITE, what)

    # -- crosschain calls ------------------------------------------------------

    def emit_subordinate_tx(self, chain: SidechainId, to: bytes, data: bytes) -> None:
        """A state-updating call to a contract on another sidechain."""
        if self._mode is _Mode.VIEW:
            raise ExecutionError(VIEW_WRITE, "subordinate transaction from a view")
        if self._mode is _Mode.BUILD:
            call = ExpectedCall(is_view=False, target_sidechain_id=chain,
                                to=to, data=data)
            if self._tx_recorder is not None:
                call = self._tx_recorder(chain, to, data)
            self.emitted.append(call)
            return
        self._consume_expected(is_view=False, chain=chain, to=to, data=data)

    def call_subordinate_view(self, chain: SidechainId, to: bytes,
                              data: bytes) -> bytes:
        """A read-only call to a contract on another sidechain; returns
        the (signed, pre-collected) result bytes."""
        if self._mode is _Mode.BUILD:
            if self._view_executor is None:
                raise ExecutionError(HANDLER_REVERT,
                                     "no view executor for dry run")
            result = self._view_executor(chain, to, data)
            self.emitted.append(ExpectedCall(is_view=True, target_sidechain_id=chain,
                                             to=to, data=data))
            return result
        position = self._consume_expected(is_view=True, chain=chain, to=to, data=data)
        if position not in self._frame.view_results:
            raise ExecutionError(MISSING_VIEW_RESULT, f"position {position}")
        return self._frame.view_results[position]

    def _consume_expected(self, is_view: bool, chain: SidechainId, to: bytes,
                          data: bytes) -> int:
        frame = self._frame
        if frame.cursor >= len(frame.expected):
            raise ExecutionError(
                CALL_MISMATCH, "call emitted beyond the signed call list")
        expected = frame.expected[frame.cursor]
        if not expected.matches(is_view, chain, to, data):
            raise ExecutionError(
                CALL_MISMATCH,
                f"emitted {'view' if is_view else 'tx'} to "
                f"{chain.short()}/{to.hex()[:8]} does not match signed entry "
                f"{frame.cursor}")
        position = frame.cursor
        frame.cursor += 1
        return position


class SidechainState:
    """Canonical ledger of one sidechain (finality is instant, so all
    honest validators share this view)."""

    def __init__(self, sidechain_id: SidechainId, handlers: Dict[str, dict]):
        self.sidechain_id = sidechain_id
        self.handlers = handlers
        self.contracts: Dict[bytes, Contract] = {}
        self.balances: Dict[bytes, int] = {}
        self.nonces: Dict[bytes, int] = {}
        self._deploy_counter = 0

    # -- deployment ------------------------------------------------------------

    def deploy(self, handler_id: str, lockable: bool = False,
               storage: Optional[Dict[int, int]] = None, balance: int = 0,
               deployer: bytes = b"\x00" * 20) -> bytes:
        """Create a contract; nonlockable is the default. The address is
        the digest of deployer and a per-chain deployment counter."""
        if handler_id not in self.handlers:
            raise ExecutionError(UNKNOWN_HANDLER, handler_id)
        address = keccak256(
            deployer + self._deploy_counter.to_bytes(8, "big")
            + self.sidechain_id.to_bytes())[12:]
        self._deploy_counter += 1
        self.contracts[address] = Contract(
            address=address, handler_id=handler_id, lockable=lockable,
            storage=dict(storage or {}))
        if balance:
            self.balances[address] = self.balances.get(address, 0) + balance
        return address

    def set_balance(self, address: bytes, amount: int) -> None:
        self.balances[address] = amount

    def contract_at(self, address: bytes) -> Contract:
        contract = self.contracts.get(address)
        if contract is None:
            raise ExecutionError(UNKNOWN_CONTRACT, address.hex())
        return contract

    def expected_nonce(self, account: bytes) -> int:
        return self.nonces.get(account, 0)

    def _dispatch(self, contract: Contract, data: bytes, host: HandlerHost):
        table = self.handlers.get(contract.handler_id)
        if table is None:
            raise ExecutionError(UNKNOWN_HANDLER, contract.handler_id)
        try:
            sel, args = decode_call(data)
        except Exception as exc:
            raise ExecutionError(MALFORMED_CALL, str(exc)) from exc
        fn = table.get(sel)
        if fn is None:
            raise ExecutionError(UNKNOWN_SELECTOR,
                                 f"{contract.handler_id}/{sel.hex()}")
        try:
            return fn(host, args)
        except ExecutionError:
            raise
        except Exception as exc:
            raise ExecutionError(HANDLER_REVERT, str(exc)) from exc

    # -- crosschain execution ----------------------------------------------------

    def execute_local(self, tx: CrosschainTransaction, frame: CallFrame,
                      sender: bytes) -> ExecutionOutcome:
        """Run the function call of an originating or subordinate
        transaction against current state. Returns the provisional
        overlay without applying it; raises ExecutionError on lock
        contention, nonlockable targets, nonce or call-list mismatches
        and handler reverts."""
        if tx.execution_sidechain_id != self.sidechain_id:
            raise ExecutionError(HANDLER_REVERT, "transaction targets another chain")
        contract = self.contract_at(tx.to)
        holder = LockHolder.of_tx(tx)
        if not contract.lockable:
            raise ExecutionError(
                NOT_LOCKABLE,
                f"crosschain transaction against nonlockable {tx.to.hex()[:8]}")
        if contract.lock.status is LockStatus.LOCKED and contract.lock.holder != holder:
            raise ExecutionError(LOCK_CONTENTION, tx.to.hex()[:8])
        if tx.nonce != self.expected_nonce(sender):
            raise ExecutionError(
                NONCE_MISMATCH,
                f"got {tx.nonce}, expected {self.expected_nonce(sender)}")
        overlay = ProvisionalOverlay()
        host = HandlerHost(self, contract, overlay, frame, _Mode.EXECUTE,
                           caller=sender, value=tx.value)
        if tx.value:
            host._move_value(sender, contract.address, tx.value)
        result = self._dispatch(contract, tx.data, host)
        if frame.cursor != len(frame.expected):
            raise ExecutionError(
                CALL_MISMATCH,
                f"only {frame.cursor} of {len(frame.expected)} signed calls emitted")
        return ExecutionOutcome(overlay=overlay, result=result_bytes(result))

    def dry_run(self, to: bytes, data: bytes, sender: bytes, value: int,
                view_executor: Callable, tx_recorder: Callable) -> ExecutionOutcome:
        """Build-mode execution: records emitted subordinate calls in
        order with concrete parameters instead of matching them."""
        contract = self.contract_at(to)
        overlay = ProvisionalOverlay()
        host = HandlerHost(self, contract, overlay, CallFrame(expected=[]),
                           _Mode.BUILD, caller=sender, value=value,
                           view_executor=view_executor, tx_recorder=tx_recorder)
        if value:
            host._move_value(sender, contract.address, value)
        result = self._dispatch(contract, data, host)
        return ExecutionOutcome(overlay=overlay, result=result_bytes(result),
                                emitted=host.emitted)

    def dry_run_view(self, to: bytes, data: bytes, sender: bytes,
                     view_executor: Callable) -> bytes:
        """Build-mode evaluation of a view call; nested views are
        resolved live through view_executor, writes are an error."""
        contract = self.contract_at(to)
        overlay = ProvisionalOverlay()
        host = HandlerHost(self, contract, overlay, CallFrame(expected=[]),
                           _Mode.BUILD, caller=sender, value=0,
                           view_executor=view_executor, tx_recorder=None)
        result = self._dispatch(contract, data, host)
        if overlay.storage_delta or overlay.balance_deltas:
            raise ExecutionError(VIEW_WRITE, "view handler attempted writes")
        return result_bytes(result)

    # -- ordinary same-chain transactions -------------------------------------

    def apply_local_tx(self, to: bytes, data: bytes, sender: bytes,
                       nonce: int, value: int = 0) -> bytes:
        """A plain single-chain transaction: no locking, effects applied
        immediately. Crosschain host calls are unavailable."""
        contract = self.contract_at(to)
        if nonce != self.expected_nonce(sender):
            raise ExecutionError(NONCE_MISMATCH,
                                 f"got {nonce}, expected {self.expected_nonce(sender)}")
        if (contract.lock.status is LockStatus.LOCKED):
            raise ExecutionError(LOCK_CONTENTION, to.hex()[:8])
        overlay = ProvisionalOverlay()
        host = HandlerHost(self, contract, overlay, CallFrame(expected=[]),
                           _Mode.EXECUTE, caller=sender, value=value)
        if value:
            host._move_value(sender, contract.address, value)
        result = self._dispatch(contract, data, host)
        self.nonces[sender] = nonce + 1
        self._apply_overlay(contract, overlay)
        return result_bytes(result)

    # -- views --------------------------------------------------------------

    def read_view(self, address: bytes, data: bytes,
                  policy: LockedViewPolicy = LockedViewPolicy.FAIL_IF_LOCKED,
                  frame: Optional[CallFrame] = None,
                  caller: bytes = b"\x00" * 20,
                  same_holder: Optional[LockHolder] = None) -> bytes:
        """Read-only call. On a locked contract the policy decides:
        fail, read base state (assume the lock's transaction will be
        ignored) or read base plus overlay (assume it commits). A view
        that belongs to the lock-holding transaction always sees its own
        provisional writes."""
        contract = self.contract_at(address)
        base_overlay = None
        if contract.lock.status is LockStatus.LOCKED:
            if same_holder is not None and contract.lock.holder == same_holder:
                base_overlay = contract.lock.provisional
            elif policy is LockedViewPolicy.FAIL_IF_LOCKED:
                raise ExecutionError(LOCKED_VIEW, address.hex()[:8])
            elif policy is LockedViewPolicy.ASSUME_COMMITTED:
                base_overlay = contract.lock.provisional
            # ASSUME_IGNORED reads base state unchanged
        overlay = ProvisionalOverlay()
        host = HandlerHost(self, contract, overlay, frame or CallFrame(expected=[]),
                           _Mode.VIEW, caller=caller, value=0,
                           base_overlay=base_overlay)
        result = self._dispatch(contract, data, host)
        if frame is not None and frame.cursor != len(frame.expected):
            raise ExecutionError(
                CALL_MISMATCH,
                f"only {frame.cursor} of {len(frame.expected)} signed calls emitted")
        return result_bytes(result)

    # -- locking (contract lock states) ----------------------------------------

    def lock(self, address: bytes, holder: LockHolder,
             overlay: ProvisionalOverlay) -> None:
        """Lock on mining; fail-if-locked, no queuing."""
        contract = self.contract_at(address)
        if not contract.lockable:
            raise ExecutionError(NOT_LOCKABLE, address.hex()[:8])
        if contract.lock.status is LockStatus.LOCKED:
            raise ExecutionError(LOCK_CONTENTION, address.hex()[:8])
        contract.lock = LockState(status=LockStatus.LOCKED, holder=holder,
                                  provisional=overlay)

    def finalize(self, address: bytes, decision: LockDecision) -> None:
        """Unlock; commit applies the provisional overlay, ignore
        discards it leaving base state untouched."""
        contract = self.contract_at(address)
        if contract.lock.status is not LockStatus.LOCKED:
            raise ExecutionError(NOT_LOCKED, address.hex()[:8])
        overlay = contract.lock.provisional
        if decision is LockDecision.COMMIT:
            self._apply_overlay(contract, overlay)
        contract.lock = LockState()

    def _apply_overlay(self, contract: Contract, overlay: ProvisionalOverlay) -> None:
        for key, value in overlay.storage_delta.items():
            contract.storage[key] = value
        for address, delta in overlay.balance_deltas.items():
            self.balances[address] = self.balances.get(address, 0) + delta

    def locked_by(self, address: bytes) -> Optional[LockHolder]:
        contract = self.contract_at(address)
        return contract.lock.holder if contract.lock.status is LockStatus.LOCKED else None

    # -- audit helpers ----------------------------------------------------------

    def total_value(self) -> int:
        return sum(self.balances.values())

    def storage_dump(self, address: bytes) -> Dict[str, str]:
        contract = self.contract_at(address)
        return {hex(k): hex(v) for k, v in sorted(contract.storage.items())}
