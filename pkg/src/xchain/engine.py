"""Node roles and message flows for atomic crosschain transactions.

A World wires sidechains (each a validator set sharing an
instantly-final ledger), coordination chains, and multichain nodes onto
one deterministic event loop. Coordinator logic runs as generator
flows that yield awaits (collect replies, wait for ready messages,
sleep); validators answer signing and mining requests only after their
own validation pipeline passes. Every labelled protocol step is traced
with a machine-readable name, which is also the namespace fault
triggers bind to.

The atomicity contract: for any fault schedule, the contracts finalized
with a commit decision for one crosschain transaction are either all of
its participating contracts or none of them, and every node's decision
equals the coordination contract's terminal status.
"""

from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple

from . import wire
from .accounts import AccountKey
from .coordination import (
    CoordinationChain,
    CoordinationError,
    EffectiveStatus,
    UnknownEntryError,
)
from .handlers import HANDLERS
from .sidechain import (
    CallFrame,
    ExecutionError,
    LockDecision,
    LockHolder,
    LockedViewPolicy,
    SidechainState,
)
from .simnet import (
    CORRUPT_SHARE,
    REMOVE_VALIDATOR,
    FaultSpec,
    Message,
    NodeCrashed,
    SimNet,
)
from .threshold import ThresholdConfig, get_scheme
from .wire import (
    CrosschainTransaction,
    CrosschainTxId,
    MessageKind,
    SidechainId,
    ThresholdMessage,
    TxType,
    encode_message,
)

# --- failure reason codes ---------------------------------------------------

PERMISSION_DENIED = "permission-denied"
UNTRUSTED_COORDINATION = "untrusted-coordination"
MISSING_SIDECHAIN = "missing-sidechain"
SIGNER_MISMATCH = "signer-mismatch"
PUBKEY_UNAVAILABLE = "pubkey-unavailable"
START_SIGNING_FAILED = "start-signing-failed"
START_REJECTED = "start-rejected"
VIEW_FAILED = "view-failed"
MINING_REJECTED = "mining-rejected"
SUBORDINATE_FAILED = "subordinate-failed"
READY_TIMEOUT = "ready-timeout"
READY_BAD_SIGNATURE = "ready-bad-signature"
COMMIT_SIGNING_FAILED = "commit-signing-failed"
COMMIT_REJECTED = "commit-rejected"
TX_NOT_ACTIVE = "transaction-not-active"
TIMEOUT_UNACCEPTABLE = "timeout-unacceptable"
READY_SIGNING_FAILED = "ready-signing-failed"
VIEW_SIGNING_FAILED = "view-result-signing-failed"
VIEW_RESULT_BAD_SIGNATURE = "view-result-bad-signature"
RESULT_MISMATCH = "result-mismatch"
STALE_VIEW_RESULT = "stale-view-result"
NOT_MINED = "not-mined"

# --- protocol step names (fault-trigger namespace) -----------------------------

ORIGINATING_STEPS = tuple(f"orig:{s}" for s in (
    "received", "permission_checked", "trust_checked", "coverage_checked",
    "signer_checked", "pubkeys_fetched", "start_signed", "start_submitted",
    "views_dispatched", "views_collected", "executed", "mined",
    "subtx_dispatched", "ready_collected", "commit_signed",
    "commit_submitted", "check_broadcast"))

SUBORDINATE_STEPS = tuple(f"sub:{s}" for s in (
    "received", "permission_checked", "trust_checked", "status_checked",
    "views_dispatched", "views_collected", "executed", "mined",
    "ready_signed", "children_dispatched", "ready_sent"))

VIEW_STEPS = tuple(f"view:{s}" for s in (
    "received", "permission_checked", "trust_checked", "status_checked",
    "children_collected", "executed", "result_signed"))

ALL_STEPS = ORIGINATING_STEPS + SUBORDINATE_STEPS + VIEW_STEPS

# Crash-at-step expectations distilled from the failure analysis: a
# coordinator crash strictly before the commit message is accepted on
# the coordination contract must leave the transaction uncommitted
# (never started, ignored, or timed out); a crash at or after
# acceptance must still end with every participant committing.
_ORIG_COMMIT_POINT = ORIGINATING_STEPS.index("orig:commit_submitted")
_SUB_READY_POINT = SUBORDINATE_STEPS.index("sub:ready_sent")


def expected_crash_outcome(step: str) -> str:
    """'committed' or 'not_committed' for a coordinator crash at step."""
    if step in ORIGINATING_STEPS:
        return ("committed"
                if ORIGINATING_STEPS.index(step) >= _ORIG_COMMIT_POINT
                else "not_committed")
    if step in SUBORDINATE_STEPS:
        return ("committed"
                if SUBORDINATE_STEPS.index(step) >= _SUB_READY_POINT
                else "not_committed")
    raise ValueError(f"no crash expectation for step {step}")


class EngineError(Exception):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        super().__init__(f"{reason}: {detail}" if detail else reason)


class BuildError(EngineError):
    pass


class _Failed(Exception):
    def __init__(self, reason: str, detail: str = ""):
        self.reason = reason
        self.detail = detail
        super().__init__(reason)


# --- awaits yielded by coordinator flows ---------------------------------------

@dataclass
class Collect:
    req_ids: Set[int]
    deadline: int
    enough: Optional[Callable] = None   # early-resume predicate over replies


@dataclass
class WaitKeys:
    keys: Set[bytes]
    deadline: int
    fail_fast: bool = True


@dataclass
class Sleep:
    ticks: int


@dataclass
class TxHandle:
    """Resolves to ('committed',) or ('failed', reason); stays None if
    the submitting coordinator crashed before answering."""

    crosschain_tx_id: CrosschainTxId
    originating_sidechain_id: SidechainId
    coordination_ref: Tuple[SidechainId, bytes]
    alias: str = ""
    outcome: Optional[tuple] = None

    @property
    def committed(self) -> bool:
        return self.outcome == ("committed",)

    @property
    def failure_reason(self) -> Optional[str]:
        if self.outcome and self.outcome[0] == "failed":
            return self.outcome[1]
        return None


@dataclass
class WorldConfig:
    scheme: str = "modp"
    coordination_block_interval: int = 10
    sidechain_block_interval: int = 10
    intra_latency: int = 1      # hops inside one sidechain or multichain node
    cross_latency: int = 3      # hops between sidechains / to coordination chains
    jitter: int = 0
    signing_round_timeout: int = 30
    freshness_window: int = 8   # blocks a view result block number may lag
    max_lock_horizon: int = 500  # largest remaining timeout validators accept
    resolve_timer_lag: int = 2  # ticks past the timeout block boundary
    locked_view_policy: LockedViewPolicy = LockedViewPolicy.FAIL_IF_LOCKED


@dataclass
class _Context:
    """A node's memory of a crosschain transaction it participated in."""

    holder: LockHolder
    locked: Set[bytes] = field(default_factory=set)
    timeout_block: int = 0
    timer_armed: bool = False


class _CoordinationNode:
    """Pseudo node fronting one coordination chain so submissions ride
    the simulated network (reads stay local snapshots)."""

    def __init__(self, world: "World", chain: CoordinationChain, node_id: str):
        self.world = world
        self.chain = chain
        self.node_id = node_id

    def on_message(self, msg: Message) -> None:
        if msg.mtype != "submit":
            return
        op = msg.body["op"]
        tmsg: ThresholdMessage = msg.body["message"]
        sig = msg.body["signature"]
        try:
            if op == "start":
                self.chain.start(tmsg, sig)
            elif op == "commit":
                self.chain.commit(tmsg, sig)
            elif op == "ignore":
                self.chain.ignore(tmsg, sig)
            else:
                raise CoordinationError(f"unknown op {op}")
            body = {"ok": True, "op": op}
            self.world.audit("coordination", node=self.node_id, op=op,
                             tx=tmsg.crosschain_tx_id, accepted=True)
        except CoordinationError as exc:
            body = {"ok": False, "op": op, "error": str(exc)}
            self.world.audit("coordination", node=self.node_id, op=op,
                             tx=tmsg.crosschain_tx_id, accepted=False,
                             error=str(exc))
        self.world.reply(self.node_id, msg, "submit_reply", body)

    def on_timer(self, tag) -> None:  # pragma: no cover - no timers here
        pass


@dataclass
class _FlowRec:
    fid: int
    gen: object
    awaiting: object = None
    generation: int = 0
    collected: dict = field(default_factory=dict)


class ValidatorNode:
    """One sidechain validator. It holds a key share, answers signing
    and mining requests after independently re-validating them, keeps
    per-transaction contexts with local timers, and (when it is the
    submitting multichain node's member) runs coordinator flows."""

    def __init__(self, world: "World", sidechain: "Sidechain", index: int):
        self.world = world
        self.sidechain = sidechain
        self.index = index
        self.node_id = f"{sidechain.sidechain_id.short()}:v{index}"
        self.key_share = None  # assigned by Sidechain key setup
        self.contexts: Dict[tuple, _Context] = {}
        self._flows: Dict[int, _FlowRec] = {}
        self._next_fid = 0
        self._pending: Dict[int, _FlowRec] = {}
        self._key_waiters: Dict[bytes, _FlowRec] = {}

    # -- plumbing -----------------------------------------------------------

    @property
    def net(self) -> SimNet:
        return self.world.net

    @property
    def state(self) -> SidechainState:
        return self.sidechain.state

    def step(self, reason: str, payload=None) -> None:
        self.net.step(self.node_id, reason, payload)

    def send(self, recipient: str, mtype: str, body: dict,
             latency: Optional[int] = None) -> None:
        self.net.send(Message(self.node_id, recipient, mtype, body),
                      latency=latency)

    def request(self, recipient: str, mtype: str, body: dict,
                latency: Optional[int] = None) -> int:
        rid = self.world.next_req_id()
        self.net.send(Message(self.node_id, recipient, mtype, body, req_id=rid),
                      latency=latency)
        return rid

    def reply(self, msg: Message, mtype: str, body: dict,
              latency: Optional[int] = None) -> None:
        self.world.reply(self.node_id, msg, mtype, body, latency=latency)

    # -- flow machinery ------------------------------------------------------

    def start_flow(self, gen) -> None:
        self._next_fid += 1
        rec = _FlowRec(fid=self._next_fid, gen=gen)
        self._flows[rec.fid] = rec
        self._advance(rec, None)

    def _advance(self, rec: _FlowRec, value) -> None:
        rec.awaiting = None
        rec.generation += 1
        rec.collected = {}
        try:
            awaited = rec.gen.send(value)
        except StopIteration:
            self._flows.pop(rec.fid, None)
            return
        except NodeCrashed:
            self._flows.pop(rec.fid, None)
            return
        rec.awaiting = awaited
        if isinstance(awaited, Sleep):
            self.net.set_timer(self.node_id, ("flow", rec.fid, rec.generation),
                               self.net.tick + awaited.ticks)
        elif isinstance(awaited, Collect):
            if not awaited.req_ids:
                self._advance(rec, {})
                return
            for rid in awaited.req_ids:
                self._pending[rid] = rec
            self.net.set_timer(self.node_id, ("flow", rec.fid, rec.generation),
                               awaited.deadline)
        elif isinstance(awaited, WaitKeys):
            if not awaited.keys:
                self._advance(rec, {})
                return
            for key in awaited.keys:
                self._key_waiters[key] = rec
            self.net.set_timer(self.node_id, ("flow", rec.fid, rec.generation),
                               awaited.deadline)
        else:
            raise TypeError(f"flow yielded unexpected {awaited!r}")

    def _finish_await(self, rec: _FlowRec) -> None:
        if isinstance(rec.awaiting, Collect):
            for rid in rec.awaiting.req_ids:
                self._pending.pop(rid, None)
        elif isinstance(rec.awaiting, WaitKeys):
            for key in rec.awaiting.keys:
                if self._key_waiters.get(key) is rec:
                    self._key_waiters.pop(key)
        collected = rec.collected
        self._advance(rec, collected)

    def _on_reply(self, msg: Message) -> None:
        rec = self._pending.get(msg.reply_to)
        if rec is None or not isinstance(rec.awaiting, Collect):
            return
        rec.collected[msg.reply_to] = (msg.sender, msg.body)
        aw = rec.awaiting
        done = len(rec.collected) == len(aw.req_ids)
        if not done and aw.enough is not None and aw.enough(rec.collected):
            done = True
        if done:
            self._finish_await(rec)

    def _on_keyed(self, key: bytes, body: dict) -> None:
        rec = self._key_waiters.get(key)
        if rec is None or not isinstance(rec.awaiting, WaitKeys):
            return
        rec.collected[key] = body
        aw = rec.awaiting
        done = len(rec.collected) == len(aw.keys)
        if not done and aw.fail_fast and not body.get("ok", False):
            done = True
        if done:
            self._finish_await(rec)

    def on_timer(self, tag) -> None:
        if isinstance(tag, tuple) and tag and tag[0] == "flow":
            _, fid, generation = tag
            rec = self._flows.get(fid)
            if rec is not None and rec.generation == generation and rec.awaiting:
                self._finish_await(rec)
            return
        if isinstance(tag, tuple) and tag and tag[0] == "resolve":
            self._resolve_context(tag[1], via="local-timer")

    def on_message(self, msg: Message) -> None:
        if msg.reply_to is not None:
            self._on_reply(msg)
            return
        mtype = msg.mtype
        if mtype == "sign_request":
            self._on_sign_request(msg)
        elif mtype == "mine_request":
            self._on_mine_request(msg)
        elif mtype == "process_subtx":
            self.start_flow(self._subordinate_flow(msg))
        elif mtype == "process_view":
            self.start_flow(self._view_flow(msg))
        elif mtype == "subtx_ready":
            ready: ThresholdMessage = msg.body["message"]
            self._on_keyed(ready.transaction_hash, msg.body)
        elif mtype == "subtx_error":
            self._on_keyed(msg.body["tx_hash"], msg.body)
        elif mtype == "check_coordination":
            self._on_check(msg)

    # -- shared validation helpers ----------------------------------------------

    def _tx_permitted(self, signer: bytes) -> bool:
        allowed = self.sidechain.tx_allowed
        return allowed is None or signer in allowed

    def _view_permitted(self, signer: bytes) -> bool:
        allowed = self.sidechain.view_allowed
        return allowed is None or signer in allowed

    def _trusted(self, tx: CrosschainTransaction) -> bool:
        ref = (tx.coordination_blockchain_id, tx.coordination_contract_address)
        if ref not in self.world.coordination:
            return False
        trusted = self.sidechain.trusted_coordination
        return trusted is None or ref in trusted

    def _coordination_for(self, tx: CrosschainTransaction) -> CoordinationChain:
        return self.world.coordination[
            (tx.coordination_blockchain_id, tx.coordination_contract_address)]

    def _tx_active(self, tx: CrosschainTransaction) -> bool:
        chain = self._coordination_for(tx)
        if not chain.has_entry(tx.crosschain_tx_id, tx.originating_sidechain_id):
            return False
        return chain.status_of(
            tx.crosschain_tx_id,
            tx.originating_sidechain_id) is EffectiveStatus.STARTED

    def _pubkeys_available(self, tx: CrosschainTransaction,
                           views_only: bool = False) -> bool:
        chain = self._coordination_for(tx)
        for node in tx.walk():
            if node is tx:
                continue
            if views_only and node.tx_type is not TxType.SUBORDINATE_VIEW:
                continue
            if chain.get_pubkey(node.execution_sidechain_id) is None:
                return False
        return True

    def _entry_timeout_block(self, tx: CrosschainTransaction) -> int:
        chain = self._coordination_for(tx)
        try:
            return chain.entry_timeout(tx.crosschain_tx_id,
                                       tx.originating_sidechain_id)
        except UnknownEntryError:
            return 0

    def _verify_view_results(self, tx: CrosschainTransaction, frame: CallFrame,
                             view_results: dict) -> Optional[str]:
        """Check signatures, hash binding and freshness of the collected
        subordinate view result messages for a frame."""
        chain = self._coordination_for(tx)
        for pos in frame.view_positions():
            packed = view_results.get(pos)
            if packed is None:
                return VIEW_FAILED
            vmsg, sig = packed
            expected = frame.expected[pos].subtree
            if vmsg.view_hash != wire.tx_hash(expected):
                return VIEW_RESULT_BAD_SIGNATURE
            pubkey = chain.get_pubkey(vmsg.executing_sidechain_id)
            if pubkey is None or not self.world.scheme.verify(
                    pubkey, encode_message(vmsg), sig):
                return VIEW_RESULT_BAD_SIGNATURE
            head = self.world.sidechains[vmsg.executing_sidechain_id].block_number
            if (vmsg.block_number > head
                    or vmsg.block_number < head - self.world.config.freshness_window):
                return STALE_VIEW_RESULT
            frame.view_results[pos] = vmsg.result
        return None

    # -- validator: signing requests ------------------------------------------------

    def _on_sign_request(self, msg: Message) -> None:
        body = msg.body
        verdict = self._sign_verdict(body)
        if verdict is not None:
            self.step(f"val:refuse_{body['kind']}", verdict)
            self.reply(msg, "sign_reply", {"ok": False, "reason": verdict},
                       latency=self.world.config.intra_latency)
            return
        partial = self.world.scheme.sign_share(self.key_share, body["payload"])
        if self.net.is_fault_active(CORRUPT_SHARE, self.node_id):
            partial = self.world.scheme.sign_share(
                replace(self.key_share, scalar=self.key_share.scalar + 1),
                body["payload"])
        self.reply(msg, "sign_reply",
                   {"ok": True, "index": partial.index, "point": partial.point},
                   latency=self.world.config.intra_latency)

    def _sign_verdict(self, body: dict) -> Optional[str]:
        """None when this validator agrees to sign, else a reason."""
        kind = body["kind"]
        payload = body["payload"]
        if kind in ("start", "commit", "ignore"):
            tx: CrosschainTransaction = body["tx"]
            try:
                signer = wire.verify_common_signer(tx)
            except wire.WireError:
                return SIGNER_MISMATCH
            if not self._tx_permitted(signer):
                return PERMISSION_DENIED
            if not self._trusted(tx):
                return UNTRUSTED_COORDINATION
            derived = self.world.derive_message(MessageKind[kind.upper()], tx)
            if encode_message(derived) != payload:
                return RESULT_MISMATCH
            if kind == "start":
                if self.node_id in self.world.start_sign_refusals:
                    return "refused-by-policy"
                if tx.crosschain_timeout_blocks > self.sidechain.max_lock_horizon:
                    return TIMEOUT_UNACCEPTABLE
                if not self._pubkeys_available(tx):
                    return PUBKEY_UNAVAILABLE
            if kind == "commit":
                readies: Dict[bytes, tuple] = body["readies"]
                chain = self._coordination_for(tx)
                for sub in tx.walk():
                    if sub.tx_type is not TxType.SUBORDINATE_TX:
                        continue
                    h = wire.tx_hash(sub)
                    packed = readies.get(h)
                    if packed is None:
                        return READY_BAD_SIGNATURE
                    rmsg, sig = packed
                    pubkey = chain.get_pubkey(rmsg.executing_sidechain_id)
                    if pubkey is None or not self.world.scheme.verify(
                            pubkey, encode_message(rmsg), sig):
                        return READY_BAD_SIGNATURE
            return None
        if kind == "ready":
            subtx: CrosschainTransaction = body["tx"]
            if wire.tx_hash(subtx) not in self.sidechain.mined:
                return NOT_MINED
            derived = self.world.derive_ready(subtx)
            if encode_message(derived) != payload:
                return RESULT_MISMATCH
            return None
        if kind == "view_result":
            view: CrosschainTransaction = body["tx"]
            try:
                signer = wire.verify_common_signer(view)
            except wire.WireError:
                return SIGNER_MISMATCH
            if not self._view_permitted(signer):
                return PERMISSION_DENIED
            if not self._trusted(view):
                return UNTRUSTED_COORDINATION
            if not self._tx_active(view):
                return TX_NOT_ACTIVE
            if not self._pubkeys_available(view, views_only=True):
                return PUBKEY_UNAVAILABLE
            claimed: ThresholdMessage = body["result_message"]
            head = self.sidechain.block_number
            if (claimed.block_number > head
                    or claimed.block_number < head - self.world.config.freshness_window):
                return STALE_VIEW_RESULT
            frame = CallFrame.for_tx(view)
            verdict = self._verify_view_results(view, frame, body["view_results"])
            if verdict is not None:
                return verdict
            try:
                result = self.state.read_view(
                    view.to, view.data, frame=frame,
                    caller=signer, same_holder=LockHolder.of_tx(view))
            except ExecutionError as exc:
                return exc.reason
            override = self.world.view_result_overrides.get(self.node_id)
            if override is not None:
                result = override
            if result != claimed.result:
                return RESULT_MISMATCH
            if encode_message(claimed) != payload:
                return RESULT_MISMATCH
            return None
        return f"unknown-sign-kind-{kind}"

    # -- validator: mining -------------------------------------------------------

    def _on_mine_request(self, msg: Message) -> None:
        body = msg.body
        tx: CrosschainTransaction = body["tx"]
        verdict = self._mine_verdict(body)
        if verdict is not None:
            self.step("val:refuse_mine", verdict)
            self.reply(msg, "mine_reply", {"ok": False, "reason": verdict},
                       latency=self.world.config.intra_latency)
            return
        # accepted: remember the context and arm the local resolve timer
        self._register_context(tx)
        self.step("val:mine_accepted", wire.tx_hash(tx))
        self.reply(msg, "mine_reply", {"ok": True},
                   latency=self.world.config.intra_latency)

    def _mine_verdict(self, body: dict) -> Optional[str]:
        tx: CrosschainTransaction = body["tx"]
        try:
            signer = wire.verify_common_signer(tx)
        except wire.WireError:
            return SIGNER_MISMATCH
        if tx.tx_type is TxType.SUBORDINATE_TX:
            # fig-13 style checks happen at mining distribution for
            # subordinate transactions
            if not self._tx_permitted(signer):
                return PERMISSION_DENIED
            if not self._trusted(tx):
                return UNTRUSTED_COORDINATION
            if not self._tx_active(tx):
                return TX_NOT_ACTIVE
            if not self._pubkeys_available(tx, views_only=True):
                return PUBKEY_UNAVAILABLE
            remaining = self._entry_timeout_block(tx) - self._coordination_for(tx).block_number
            if remaining > self.sidechain.max_lock_horizon:
                return TIMEOUT_UNACCEPTABLE
        frame = CallFrame.for_tx(tx)
        verdict = self._verify_view_results(tx, frame, body["view_results"])
        if verdict is not None:
            return verdict
        try:
            outcome = self.state.execute_local(tx, frame, signer)
        except ExecutionError as exc:
            return exc.reason
        if outcome.overlay.storage_delta != body["overlay"].storage_delta \
                or outcome.overlay.balance_deltas != body["overlay"].balance_deltas:
            return RESULT_MISMATCH
        return None

    def _register_context(self, tx: CrosschainTransaction) -> None:
        key = (tx.crosschain_tx_id, tx.originating_sidechain_id)
        ctx = self.contexts.get(key)
        if ctx is None:
            ctx = _Context(holder=LockHolder.of_tx(tx))
            self.contexts[key] = ctx
        ctx.locked.add(tx.to)
        ctx.timeout_block = self._entry_timeout_block(tx)
        if not ctx.timer_armed:
            ctx.timer_armed = True
            interval = self.world.config.coordination_block_interval
            expire = (ctx.timeout_block + 1) * interval + self.world.config.resolve_timer_lag
            self.net.set_timer(self.node_id, ("resolve", key), expire)

    # -- resolution (check messages and local timers) ------------------------------

    def _on_check(self, msg: Message) -> None:
        key = (msg.body["tx_id"], msg.body["orig_id"])
        if msg.body.get("forward", False):
            self.step("sub:check_forwarded")
            for validator in self.sidechain.validators:
                if validator is not self:
                    self.send(validator.node_id, "check_coordination",
                              {**msg.body, "forward": False},
                              latency=self.world.config.intra_latency)
        self._resolve_context(key, via="check-message")

    def _resolve_context(self, key: tuple, via: str) -> None:
        ctx = self.contexts.get(key)
        if ctx is None:
            return
        tx_id, orig_id = key
        chain = self.world.coordination.get(ctx.holder.coordination_ref)
        if chain is None:
            return
        if not chain.has_entry(tx_id, orig_id):
            status = EffectiveStatus.IGNORED
        else:
            status = chain.status_of(tx_id, orig_id)
        if status is EffectiveStatus.STARTED:
            # fired early (clock skew or an explicit check while still
            # active): re-arm until past the timeout block
            interval = self.world.config.coordination_block_interval
            expire = ((chain.entry_timeout(tx_id, orig_id) + 1) * interval
                      + self.world.config.resolve_timer_lag)
            if expire <= self.net.tick:
                expire = self.net.tick + interval
            self.net.set_timer(self.node_id, ("resolve", key), expire)
            return
        decision = (LockDecision.COMMIT if status is EffectiveStatus.COMMITTED
                    else LockDecision.IGNORE)
        self.world.audit("decision", node=self.node_id, tx=tx_id,
                         decision=decision.value, status=status.value, via=via)
        for address in sorted(ctx.locked):
            if self.state.locked_by(address) == ctx.holder:
                self.state.finalize(address, decision)
                self.world.audit("finalize", node=self.node_id, tx=tx_id,
                                 sidechain=self.sidechain.sidechain_id,
                                 contract=address, decision=decision.value)
                self.net.record(self.node_id, "finalize",
                                f"{decision.value}:{address.hex()[:8]}")
        del self.contexts[key]

    # -- threshold signing round (coordinator side) -----------------------------------

    def _threshold_round(self, kind: str, payload: bytes, context: dict):
        """Collect m valid partial signatures (own plus remote) within
        the signing round timeout; yields, returns the combined
        signature or None."""
        scheme = self.world.scheme
        config = self.sidechain.threshold_config
        publics = self.sidechain.share_publics
        partials = []
        own_verdict = self._sign_verdict({**context, "kind": kind,
                                          "payload": payload})
        if own_verdict is None:
            partials.append(scheme.sign_share(self.key_share, payload))
        req_ids = set()
        for validator in self.sidechain.validators:
            if validator is self:
                continue
            req_ids.add(self.request(
                validator.node_id, "sign_request",
                {**context, "kind": kind, "payload": payload},
                latency=self.world.config.intra_latency))

        def _valid(replies) -> int:
            count = len(partials)
            for _, body in replies.values():
                if not body.get("ok"):
                    continue
                share = self.world.scheme_share(body["index"], body["point"])
                if scheme.verify_share(publics[body["index"]], payload, share):
                    count += 1
            return count

        replies = yield Collect(
            req_ids=req_ids,
            deadline=self.net.tick + self.world.config.signing_round_timeout,
            enough=lambda rs: _valid(rs) >= config.m)
        for _, body in replies.values():
            if not body.get("ok"):
                continue
            share = self.world.scheme_share(body["index"], body["point"])
            if scheme.verify_share(publics[body["index"]], payload, share):
                partials.append(share)
        if len(partials) < config.m:
            return None
        signature = scheme.combine(partials[:config.m], config)
        if not scheme.verify(self.sidechain.group_public_key, payload, signature):
            return None
        return signature

    # -- coordination submissions ----------------------------------------------------

    def _submit(self, tx: CrosschainTransaction, op: str,
                message: ThresholdMessage, signature):
        rid = self.request(
            self.world.coordination_node_id(tx), "submit",
            {"op": op, "message": message, "signature": signature},
            latency=self.world.config.cross_latency)
        replies = yield Collect(
            req_ids={rid},
            deadline=self.net.tick + 4 * self.world.config.cross_latency
            + self.world.config.signing_round_timeout)
        if rid not in replies:
            return {"ok": False, "error": "submission timed out"}
        return replies[rid][1]

    # -- views: gather subordinate view results ----------------------------------------

    def _gather_views(self, mn: "MultichainNode", tx: CrosschainTransaction,
                      frame: CallFrame, deadline: int):
        """Dispatch the depth-1 subordinate views of tx and collect
        their signed results. Returns (view_results dict, None) or
        (None, failure reason)."""
        positions = frame.view_positions()
        if not positions:
            return {}, None
        rid_to_pos = {}
        for pos in positions:
            child = frame.expected[pos].subtree
            target = mn.members.get(child.target_sidechain_id)
            if target is None:
                return None, MISSING_SIDECHAIN
            rid = self.request(target.node_id, "process_view",
                               {"tx": child, "multichain": mn.name},
                               latency=self.world.config.cross_latency)
            rid_to_pos[rid] = pos
        replies = yield Collect(req_ids=set(rid_to_pos), deadline=deadline)
        results = {}
        for rid, pos in rid_to_pos.items():
            if rid not in replies:
                return None, VIEW_FAILED
            _, body = replies[rid]
            if not body.get("ok"):
                return None, body.get("reason", VIEW_FAILED)
            results[pos] = (body["message"], body["signature"])
        return results, None

    # -- mining round -------------------------------------------------------------

    def _mine_round(self, tx: CrosschainTransaction, frame: CallFrame,
                    view_results: dict, outcome):
        """Propose the executed transaction to the validator set; on m
        accepts the transaction is final: nonce consumed, contract
        locked with the provisional overlay attached."""
        config = self.sidechain.threshold_config
        accepts = 1  # own validation already done by execute_local
        self._register_context(tx)
        body = {"tx": tx, "view_results": view_results, "overlay": outcome.overlay}
        req_ids = set()
        for validator in self.sidechain.validators:
            if validator is not self:
                req_ids.add(self.request(validator.node_id, "mine_request", body,
                                         latency=self.world.config.intra_latency))

        def _accepted(replies) -> int:
            return accepts + sum(1 for _, b in replies.values() if b.get("ok"))

        replies = yield Collect(
            req_ids=req_ids,
            deadline=self.net.tick + self.world.config.signing_round_timeout,
            enough=lambda rs: _accepted(rs) >= config.m)
        total = _accepted(replies)
        if total < config.m:
            reasons = [b.get("reason") for _, b in replies.values() if not b.get("ok")]
            return reasons[0] if reasons else MINING_REJECTED
        try:
            # inclusion in the chain: lock the contract with the overlay
            # attached; a racing transaction may have taken the lock
            # since this one was validated
            self.state.lock(tx.to, LockHolder.of_tx(tx), outcome.overlay)
        except ExecutionError as exc:
            return exc.reason
        signer = wire.recover_signer(tx)
        self.state.nonces[signer] = tx.nonce + 1
        self.sidechain.mined.add(wire.tx_hash(tx))
        self.world.audit("mined", node=self.node_id, tx=tx.crosschain_tx_id,
                         sidechain=self.sidechain.sidechain_id, contract=tx.to,
                         tx_hash=wire.tx_hash(tx))
        self.net.record(self.node_id, "lock", f"locked:{tx.to.hex()[:8]}")
        return None

    # -- originating transaction flow ----------------------------------------------

    def submit_originating(self, mn: "MultichainNode", tx: CrosschainTransaction,
                           handle: TxHandle) -> None:
        self.start_flow(self._originating_flow(mn, tx, handle))

    def _originating_flow(self, mn: "MultichainNode", tx: CrosschainTransaction,
                          handle: TxHandle):
        cfg = self.world.config
        started = False
        try:
            self.step("orig:received", tx.crosschain_tx_id)
            try:
                signer = wire.recover_signer(tx)
            except wire.WireError:
                raise _Failed(SIGNER_MISMATCH)
            if not self._tx_permitted(signer):
                raise _Failed(PERMISSION_DENIED)
            self.step("orig:permission_checked")
            if not self._trusted(tx) or not mn.trusts(
                    tx.coordination_blockchain_id, tx.coordination_contract_address):
                raise _Failed(UNTRUSTED_COORDINATION)
            self.step("orig:trust_checked")
            for node in tx.walk():
                chain_id = node.execution_sidechain_id
                if chain_id not in mn.members or chain_id not in self.world.sidechains:
                    raise _Failed(MISSING_SIDECHAIN, chain_id.short())
            self.step("orig:coverage_checked")
            try:
                wire.verify_common_signer(tx)
            except wire.WireError:
                raise _Failed(SIGNER_MISMATCH)
            self.step("orig:signer_checked")
            if not self._pubkeys_available(tx):
                raise _Failed(PUBKEY_UNAVAILABLE)
            self.step("orig:pubkeys_fetched")

            start_msg = self.world.derive_message(MessageKind.START, tx)
            start_sig = yield from self._threshold_round(
                "start", encode_message(start_msg), {"tx": tx})
            if start_sig is None:
                raise _Failed(START_SIGNING_FAILED)
            self.step("orig:start_signed")
            result = yield from self._submit(tx, "start", start_msg, start_sig)
            if not result.get("ok"):
                raise _Failed(START_REJECTED, result.get("error", ""))
            started = True
            self.step("orig:start_submitted")

            deadline = self._global_deadline(tx)
            frame = CallFrame.for_tx(tx)
            self.step("orig:views_dispatched")
            view_results, failure = yield from self._gather_views(
                mn, tx, frame, deadline)
            if failure is not None:
                raise _Failed(failure)
            verdict = self._verify_view_results(tx, frame, view_results)
            if verdict is not None:
                raise _Failed(verdict)
            self.step("orig:views_collected")

            try:
                outcome = self.state.execute_local(tx, frame, signer)
            except ExecutionError as exc:
                raise _Failed(exc.reason, str(exc))
            self.step("orig:executed")
            mining_failure = yield from self._mine_round(
                tx, frame, view_results, outcome)
            if mining_failure is not None:
                raise _Failed(mining_failure)
            self.step("orig:mined")

            # legs are dispatched in the order the call graph executed
            # them; each leg's whole subtree must report ready before the
            # next leg goes out
            self.step("orig:subtx_dispatched")
            readies: Dict[bytes, tuple] = {}
            chain = self._coordination_for(tx)
            for pos in frame.tx_positions():
                child = frame.expected[pos].subtree
                target = mn.members[child.target_sidechain_id]
                self.send(target.node_id, "process_subtx",
                          {"tx": child, "multichain": mn.name},
                          latency=cfg.cross_latency)
                leg_hashes = {wire.tx_hash(node) for node in child.walk()
                              if node.tx_type is TxType.SUBORDINATE_TX}
                collected = yield WaitKeys(keys=leg_hashes, deadline=deadline)
                for h in leg_hashes:
                    body = collected.get(h)
                    if body is None:
                        raise _Failed(READY_TIMEOUT)
                    if not body.get("ok"):
                        raise _Failed(SUBORDINATE_FAILED,
                                      body.get("reason", ""))
                    rmsg: ThresholdMessage = body["message"]
                    pubkey = chain.get_pubkey(rmsg.executing_sidechain_id)
                    if pubkey is None or not self.world.scheme.verify(
                            pubkey, encode_message(rmsg), body["signature"]):
                        raise _Failed(READY_BAD_SIGNATURE)
                    readies[h] = (rmsg, body["signature"])
            self.step("orig:ready_collected")

            commit_msg = self.world.derive_message(MessageKind.COMMIT, tx)
            commit_sig = yield from self._threshold_round(
                "commit", encode_message(commit_msg),
                {"tx": tx, "readies": readies})
            if commit_sig is None:
                raise _Failed(COMMIT_SIGNING_FAILED)
            self.step("orig:commit_signed")
            result = yield from self._submit(tx, "commit", commit_msg, commit_sig)
            if not result.get("ok"):
                raise _Failed(COMMIT_REJECTED, result.get("error", ""))
            self.step("orig:commit_submitted")

            self._broadcast_check(mn, tx)
            self.step("orig:check_broadcast")
            handle.outcome = ("committed",)
            self.world.audit("outcome", tx=tx.crosschain_tx_id,
                             outcome="committed", alias=handle.alias)
        except _Failed as failure:
            self.net.record(self.node_id, "failure", failure.reason,
                            failure.detail)
            handle.outcome = ("failed", failure.reason)
            self.world.audit("outcome", tx=tx.crosschain_tx_id,
                             outcome="failed", reason=failure.reason,
                             alias=handle.alias)
            if started:
                yield from self._ignore_flow(mn, tx)

    def _ignore_flow(self, mn: "MultichainNode", tx: CrosschainTransaction):
        """Best-effort early termination; if any step fails the global
        timeout resolves the transaction instead."""
        ignore_msg = self.world.derive_message(MessageKind.IGNORE, tx)
        sig = yield from self._threshold_round(
            "ignore", encode_message(ignore_msg), {"tx": tx})
        if sig is None:
            self.net.record(self.node_id, "failure", "ignore-signing-failed")
            return
        self.step("orig:ignore_signed")
        result = yield from self._submit(tx, "ignore", ignore_msg, sig)
        if result.get("ok"):
            self.step("orig:ignore_submitted")
            self._broadcast_check(mn, tx)

    def _global_deadline(self, tx: CrosschainTransaction) -> int:
        timeout_block = self._entry_timeout_block(tx)
        interval = self.world.config.coordination_block_interval
        return (timeout_block + 1) * interval

    def _broadcast_check(self, mn: "MultichainNode", tx: CrosschainTransaction) -> None:
        body = {"tx_id": tx.crosschain_tx_id,
                "orig_id": tx.originating_sidechain_id}
        for validator in self.sidechain.validators:
            if validator is not self:
                self.send(validator.node_id, "check_coordination",
                          {**body, "forward": False},
                          latency=self.world.config.intra_latency)
        involved = {node.execution_sidechain_id for node in tx.walk()
                    if node.tx_type is not TxType.SUBORDINATE_VIEW}
        for chain_id in sorted(involved, key=lambda s: s.value):
            if chain_id == self.sidechain.sidechain_id:
                continue
            member = mn.members.get(chain_id)
            if member is not None:
                self.send(member.node_id, "check_coordination",
                          {**body, "forward": True},
                          latency=self.world.config.cross_latency)
        self._resolve_context((tx.crosschain_tx_id, tx.originating_sidechain_id),
                              via="own-broadcast")

    # -- subordinate transaction flow ----------------------------------------------

    def _subordinate_flow(self, msg: Message):
        tx: CrosschainTransaction = msg.body["tx"]
        mn = self.world.multichain_nodes[msg.body["multichain"]]
        orig_coordinator = mn.members[tx.originating_sidechain_id]
        cfg = self.world.config

        def fail(reason: str):
            self.net.record(self.node_id, "failure", reason)
            self.send(orig_coordinator.node_id, "subtx_error",
                      {"ok": False, "tx_hash": wire.tx_hash(tx), "reason": reason},
                      latency=cfg.cross_latency)

        self.step("sub:received", tx.crosschain_tx_id)
        try:
            signer = wire.verify_common_signer(tx)
        except wire.WireError:
            return fail(SIGNER_MISMATCH)
        if not self._tx_permitted(signer):
            return fail(PERMISSION_DENIED)
        self.step("sub:permission_checked")
        if not self._trusted(tx):
            return fail(UNTRUSTED_COORDINATION)
        self.step("sub:trust_checked")
        if not self._tx_active(tx):
            return fail(TX_NOT_ACTIVE)
        if not self._pubkeys_available(tx, views_only=True):
            return fail(PUBKEY_UNAVAILABLE)
        self.step("sub:status_checked")

        deadline = self._global_deadline(tx)
        frame = CallFrame.for_tx(tx)
        self.step("sub:views_dispatched")
        view_results, failure = yield from self._gather_views(mn, tx, frame, deadline)
        if failure is not None:
            return fail(failure)
        verdict = self._verify_view_results(tx, frame, view_results)
        if verdict is not None:
            return fail(verdict)
        self.step("sub:views_collected")

        try:
            outcome = self.state.execute_local(tx, frame, signer)
        except ExecutionError as exc:
            return fail(exc.reason)
        self.step("sub:executed")
        mining_failure = yield from self._mine_round(tx, frame, view_results, outcome)
        if mining_failure is not None:
            return fail(mining_failure)
        self.step("sub:mined")

        ready_msg = self.world.derive_ready(tx)
        ready_sig = yield from self._threshold_round(
            "ready", encode_message(ready_msg), {"tx": tx})
        if ready_sig is None:
            return fail(READY_SIGNING_FAILED)
        self.step("sub:ready_signed")

        for pos in frame.tx_positions():
            child = frame.expected[pos].subtree
            target = mn.members.get(child.target_sidechain_id)
            self.send(target.node_id, "process_subtx",
                      {"tx": child, "multichain": mn.name},
                      latency=cfg.cross_latency)
        self.step("sub:children_dispatched")

        self.send(orig_coordinator.node_id, "subtx_ready",
                  {"ok": True, "message": ready_msg, "signature": ready_sig},
                  latency=cfg.cross_latency)
        self.step("sub:ready_sent")

    # -- subordinate view flow ----------------------------------------------------

    def _view_flow(self, msg: Message):
        view: CrosschainTransaction = msg.body["tx"]
        mn = self.world.multichain_nodes[msg.body["multichain"]]
        cfg = self.world.config

        def refuse(reason: str):
            self.net.record(self.node_id, "failure", reason)
            self.reply(msg, "view_reply", {"ok": False, "reason": reason},
                       latency=cfg.cross_latency)

        self.step("view:received", view.crosschain_tx_id)
        try:
            signer = wire.verify_common_signer(view)
        except wire.WireError:
            return refuse(SIGNER_MISMATCH)
        if not self._view_permitted(signer):
            return refuse(PERMISSION_DENIED)
        self.step("view:permission_checked")
        if not self._trusted(view):
            return refuse(UNTRUSTED_COORDINATION)
        self.step("view:trust_checked")
        if not self._tx_active(view):
            return refuse(TX_NOT_ACTIVE)
        if not self._pubkeys_available(view, views_only=True):
            return refuse(PUBKEY_UNAVAILABLE)
        self.step("view:status_checked")

        deadline = self._global_deadline(view)
        frame = CallFrame.for_tx(view)
        view_results, failure = yield from self._gather_views(mn, view, frame, deadline)
        if failure is not None:
            return refuse(failure)
        verdict = self._verify_view_results(view, frame, view_results)
        if verdict is not None:
            return refuse(verdict)
        self.step("view:children_collected")

        try:
            result = self.state.read_view(
                view.to, view.data, frame=frame, caller=signer,
                same_holder=LockHolder.of_tx(view))
        except ExecutionError as exc:
            return refuse(exc.reason)
        self.step("view:executed")

        result_msg = ThresholdMessage(
            kind=MessageKind.SUBORDINATE_VIEW_RESULT,
            originating_sidechain_id=view.originating_sidechain_id,
            crosschain_tx_id=view.crosschain_tx_id,
            coordination_blockchain_id=view.coordination_blockchain_id,
            coordination_contract_address=view.coordination_contract_address,
            executing_sidechain_id=self.sidechain.sidechain_id,
            block_number=self.sidechain.block_number,
            view_hash=wire.tx_hash(view),
            result=result)
        sig = yield from self._threshold_round(
            "view_result", encode_message(result_msg),
            {"tx": view, "view_results": view_results,
             "result_message": result_msg})
        if sig is None:
            return refuse(VIEW_SIGNING_FAILED)
        self.step("view:result_signed")
        self.reply(msg, "view_reply",
                   {"ok": True, "message": result_msg, "signature": sig},
                   latency=cfg.cross_latency)


class Sidechain:
    """A sidechain: threshold key material, validator set, permissions
    and the shared (instantly final) ledger."""

    def __init__(self, world: "World", sidechain_id: SidechainId,
                 config: ThresholdConfig, keygen_seed: int,
                 tx_allowed: Optional[Set[bytes]] = None,
                 view_allowed: Optional[Set[bytes]] = None,
                 trusted_coordination: Optional[Set[tuple]] = None,
                 max_lock_horizon: Optional[int] = None):
        self.world = world
        self.sidechain_id = sidechain_id
        self.threshold_config = config
        self.state = SidechainState(sidechain_id, HANDLERS)
        self.block_number = 0
        self.mined: Set[bytes] = set()
        self.tx_allowed = tx_allowed
        self.view_allowed = view_allowed
        self.trusted_coordination = trusted_coordination
        self.max_lock_horizon = (world.config.max_lock_horizon
                                 if max_lock_horizon is None else max_lock_horizon)
        self.validators = [ValidatorNode(world, self, i)
                           for i in range(1, config.n + 1)]
        self.install_keys(keygen_seed)

    def advance_block(self, n: int = 1) -> None:
        self.block_number += n

    def install_keys(self, seed: int) -> None:
        shares, pk = self.world.scheme.keygen_dealer(self.threshold_config, seed)
        self.group_public_key = pk
        self.share_publics = {
            share.index: self.world.scheme.public_share(share)
            for share in shares}
        for validator, share in zip(self.validators, shares):
            validator.key_share = share

    def validator(self, index: int) -> ValidatorNode:
        return self.validators[index - 1]


class MultichainNode:
    """One organization's mutually trusted nodes, at most one per
    sidechain, plus the account key it submits with."""

    def __init__(self, name: str, members: Dict[SidechainId, ValidatorNode],
                 trusted: Optional[Set[tuple]], account: AccountKey):
        self.name = name
        self.members = members
        self.trusted = trusted
        self.account = account

    def trusts(self, chain_id: SidechainId, address: bytes) -> bool:
        return self.trusted is None or (chain_id, address) in self.trusted


@dataclass(frozen=True)
class CallSpec:
    """Entry point for building a crosschain transaction or view."""

    sidechain_id: SidechainId
    to: bytes
    data: bytes
    value: int = 0


class World:
    """Everything one simulation run owns."""

    def __init__(self, seed: int = 0, config: Optional[WorldConfig] = None):
        self.config = config or WorldConfig()
        self.seed = seed
        self.net = SimNet(seed=seed, default_latency=self.config.cross_latency,
                          jitter=self.config.jitter)
        self.scheme = get_scheme(self.config.scheme)
        self.sidechains: Dict[SidechainId, Sidechain] = {}
        self.coordination: Dict[tuple, CoordinationChain] = {}
        self._coordination_nodes: Dict[tuple, str] = {}
        self.multichain_nodes: Dict[str, MultichainNode] = {}
        self._req_counter = 0
        self._id_counter = 0
        self.audit_log: List[dict] = []
        self.handles: List[TxHandle] = []
        self.view_result_overrides: Dict[str, bytes] = {}
        # scenario-injected policy: node ids that refuse to sign start
        # messages (e.g. modelling validators that consider a
        # coordinator to be spamming)
        self.start_sign_refusals: Set[str] = set()
        self._member_rotation: Dict[SidechainId, int] = {}
        self.net.on_fault_armed(self._fault_armed)

    # -- ids and audit -------------------------------------------------------

    def next_req_id(self) -> int:
        self._req_counter += 1
        return self._req_counter

    def new_tx_id(self) -> CrosschainTxId:
        from .hashing import keccak256
        self._id_counter += 1
        raw = keccak256(b"txid" + self.seed.to_bytes(8, "big")
                        + self._id_counter.to_bytes(8, "big"))
        return CrosschainTxId(int.from_bytes(raw, "big"))

    def audit(self, kind: str, **info) -> None:
        self.audit_log.append({"kind": kind, "tick": self.net.tick, **info})

    def reply(self, sender: str, msg: Message, mtype: str, body: dict,
              latency: Optional[int] = None) -> None:
        self.net.send(Message(sender, msg.sender, mtype, body,
                              reply_to=msg.req_id), latency=latency)

    def scheme_share(self, index: int, point):
        from .threshold import SignatureShare
        return SignatureShare(index=index, point=point)

    def _fault_armed(self, spec: FaultSpec) -> None:
        if spec.kind == REMOVE_VALIDATOR and spec.node:
            # removal behaves like a failure; rekeying only happens when
            # a scenario explicitly triggers it
            self.net._crash(spec.node)

    # -- topology ---------------------------------------------------------------

    def add_coordination_chain(self, chain_id: SidechainId,
                               contract_address: Optional[bytes] = None,
                               max_timeout_blocks: int = 1000,
                               block_interval: Optional[int] = None,
                               grace_window: int = 16) -> CoordinationChain:
        from .hashing import keccak256
        if contract_address is None:
            contract_address = keccak256(b"coordination" + chain_id.to_bytes())[12:]
        chain = CoordinationChain(
            chain_id=chain_id, contract_address=contract_address,
            scheme=self.scheme, max_timeout_blocks=max_timeout_blocks,
            grace_window=grace_window)
        ref = (chain_id, contract_address)
        self.coordination[ref] = chain
        node_id = f"coord:{chain_id.short()}"
        self._coordination_nodes[ref] = node_id
        self.net.register(node_id, _CoordinationNode(self, chain, node_id))
        self.net.bind_clock(node_id, chain,
                            block_interval or self.config.coordination_block_interval)
        return chain

    def coordination_node_id(self, tx: CrosschainTransaction) -> str:
        return self._coordination_nodes[
            (tx.coordination_blockchain_id, tx.coordination_contract_address)]

    def add_sidechain(self, sidechain_id: SidechainId, validators: int,
                      fault_tolerance: int = 0,
                      threshold: Optional[int] = None,
                      keygen_seed: Optional[int] = None,
                      tx_allowed: Optional[Set[bytes]] = None,
                      view_allowed: Optional[Set[bytes]] = None,
                      trusted_coordination: Optional[Set[tuple]] = None,
                      max_lock_horizon: Optional[int] = None,
                      block_interval: Optional[int] = None) -> Sidechain:
        if threshold is None:
            config = ThresholdConfig.from_fault_tolerance(validators, fault_tolerance)
        else:
            config = ThresholdConfig(n=validators, f=fault_tolerance, m=threshold)
        if keygen_seed is None:
            keygen_seed = self.seed ^ sidechain_id.value & ((1 << 62) - 1)
        sidechain = Sidechain(self, sidechain_id, config, keygen_seed,
                              tx_allowed=tx_allowed, view_allowed=view_allowed,
                              trusted_coordination=trusted_coordination,
                              max_lock_horizon=max_lock_horizon)
        self.sidechains[sidechain_id] = sidechain
        for validator in sidechain.validators:
            self.net.register(validator.node_id, validator)
        self.net.bind_clock(f"chain:{sidechain_id.short()}", sidechain,
                            block_interval or self.config.sidechain_block_interval)
        for chain in self.coordination.values():
            chain.register_pubkey(sidechain_id, sidechain.group_public_key,
                                  bootstrap=True)
        return sidechain

    def add_multichain_node(self, name: str, member_chains: Sequence[SidechainId],
                            account: Optional[AccountKey] = None,
                            members: Optional[Dict[SidechainId, int]] = None,
                            trusted: Optional[Set[tuple]] = None) -> MultichainNode:
        """Members default to a round-robin assignment so distinct
        multichain nodes get distinct validators where possible."""
        assignment: Dict[SidechainId, ValidatorNode] = {}
        for chain_id in member_chains:
            sidechain = self.sidechains[chain_id]
            if members and chain_id in members:
                index = members[chain_id]
            else:
                rotation = self._member_rotation.get(chain_id, 0)
                index = (rotation % sidechain.threshold_config.n) + 1
                self._member_rotation[chain_id] = rotation + 1
            assignment[chain_id] = sidechain.validator(index)
        mn = MultichainNode(name=name, members=assignment, trusted=trusted,
                            account=account or AccountKey.from_label(name))
        self.multichain_nodes[name] = mn
        return mn

    def rekey_sidechain(self, sidechain_id: SidechainId, seed: int) -> None:
        """Explicit key rotation (scenario triggered): generate a fresh
        key set and publish it authorized under the old key; the old key
        stays verifiable for the grace window."""
        sidechain = self.sidechains[sidechain_id]
        old_shares = [v.key_share for v in sidechain.validators]
        old_config = sidechain.threshold_config
        sidechain.install_keys(seed)
        from .coordination import key_update_payload
        for chain in self.coordination.values():
            payload = key_update_payload(
                sidechain_id, self.scheme.public_key_bytes(sidechain.group_public_key))
            partials = [self.scheme.sign_share(s, payload)
                        for s in old_shares[:old_config.m]]
            authorization = self.scheme.combine(partials, old_config)
            chain.register_pubkey(sidechain_id, sidechain.group_public_key,
                                  authorization=authorization)

    # -- message derivation ---------------------------------------------------------

    def derive_message(self, kind: MessageKind,
                       tx: CrosschainTransaction) -> ThresholdMessage:
        return ThresholdMessage(
            kind=kind,
            originating_sidechain_id=tx.originating_sidechain_id,
            crosschain_tx_id=tx.crosschain_tx_id,
            coordination_blockchain_id=tx.coordination_blockchain_id,
            coordination_contract_address=tx.coordination_contract_address,
            timeout_blocks=(tx.crosschain_timeout_blocks
                            if kind is MessageKind.START else None))

    def derive_ready(self, subtx: CrosschainTransaction) -> ThresholdMessage:
        return ThresholdMessage(
            kind=MessageKind.SUBORDINATE_TX_READY,
            originating_sidechain_id=subtx.originating_sidechain_id,
            crosschain_tx_id=subtx.crosschain_tx_id,
            coordination_blockchain_id=subtx.coordination_blockchain_id,
            coordination_contract_address=subtx.coordination_contract_address,
            executing_sidechain_id=subtx.target_sidechain_id,
            transaction_hash=wire.tx_hash(subtx))

    # -- public operations -------------------------------------------------------------

    def submit_crosschain_tx(self, mn_name: str, tx: CrosschainTransaction,
                             alias: str = "", delay: int = 0) -> TxHandle:
        """Hand a signed originating transaction to the multichain
        node's coordinator on the originating sidechain."""
        mn = self.multichain_nodes[mn_name]
        handle = TxHandle(
            crosschain_tx_id=tx.crosschain_tx_id,
            originating_sidechain_id=tx.originating_sidechain_id,
            coordination_ref=(tx.coordination_blockchain_id,
                              tx.coordination_contract_address),
            alias=alias)
        self.handles.append(handle)
        coordinator = mn.members.get(tx.originating_sidechain_id)
        if coordinator is None:
            handle.outcome = ("failed", MISSING_SIDECHAIN)
            return handle
        self.net.call_soon(
            lambda: coordinator.submit_originating(mn, tx, handle), delay=delay)
        return handle

    def submit_crosschain_view(self, mn_name: str, view: CrosschainTransaction,
                               policy: Optional[LockedViewPolicy] = None) -> bytes:
        """Synchronous recursive evaluation on the multichain node's
        member replicas: no signing, no locking."""
        mn = self.multichain_nodes[mn_name]
        policy = policy or self.config.locked_view_policy
        for node in view.walk():
            if node.tx_type is not TxType.SUBORDINATE_VIEW:
                raise EngineError(VIEW_FAILED, "tree contains non-view nodes")
            if node.target_sidechain_id not in mn.members:
                raise EngineError(MISSING_SIDECHAIN,
                                  node.target_sidechain_id.short())

        def evaluate(node: CrosschainTransaction) -> bytes:
            frame = CallFrame.for_tx(node)
            for pos in frame.view_positions():
                frame.view_results[pos] = evaluate(frame.expected[pos].subtree)
            state = self.sidechains[node.target_sidechain_id].state
            return state.read_view(node.to, node.data, policy=policy,
                                   frame=frame, caller=mn.account.address)

        return evaluate(view)

    # -- transaction building (dry-run dynamic analysis) ---------------------------------

    def build_crosschain_tx(self, mn_name: str, entry: CallSpec,
                            timeout_blocks: int,
                            coordination_ref: Tuple[SidechainId, bytes],
                            account: Optional[AccountKey] = None,
                            tx_id: Optional[CrosschainTxId] = None
                            ) -> CrosschainTransaction:
        """Dry-run the call graph against current overlay-free state,
        recording every emitted subordinate call in execution order with
        concrete parameters, and allocate in-order nonces per chain."""
        mn = self.multichain_nodes[mn_name]
        account = account or mn.account
        coord_id, coord_addr = coordination_ref
        tx_id = tx_id or self.new_tx_id()
        origin = entry.sidechain_id
        nonce_cursor: Dict[SidechainId, int] = {}

        def allocate_nonce(chain_id: SidechainId) -> int:
            state = self.sidechains[chain_id].state
            base = state.expected_nonce(account.address)
            offset = nonce_cursor.get(chain_id, 0)
            nonce_cursor[chain_id] = offset + 1
            return base + offset

        def build_view(chain_id: SidechainId, to: bytes, data: bytes):
            if chain_id not in mn.members or chain_id not in self.sidechains:
                raise BuildError(MISSING_SIDECHAIN, chain_id.short())
            state = self.sidechains[chain_id].state
            children: List[CrosschainTransaction] = []

            def child_view_executor(c_chain, c_to, c_data):
                try:
                    child_node, child_result = build_view(c_chain, c_to, c_data)
                except BuildError as exc:
                    raise ExecutionError(exc.reason, str(exc)) from exc
                children.append(child_node)
                return child_result

            try:
                result = state.dry_run_view(to, data, sender=account.address,
                                            view_executor=child_view_executor)
            except ExecutionError as exc:
                raise BuildError(exc.reason, str(exc)) from exc
            node = CrosschainTransaction(
                tx_type=TxType.SUBORDINATE_VIEW,
                coordination_blockchain_id=coord_id,
                coordination_contract_address=coord_addr,
                crosschain_tx_id=tx_id,
                originating_sidechain_id=origin,
                target_sidechain_id=chain_id,
                nonce=0, to=to, data=data,
                subordinates=tuple(children))
            return node, result

        def build_tx(chain_id: SidechainId, to: bytes, data: bytes, value: int,
                     is_root: bool) -> CrosschainTransaction:
            if chain_id not in mn.members or chain_id not in self.sidechains:
                raise BuildError(MISSING_SIDECHAIN, chain_id.short())
            state = self.sidechains[chain_id].state
            children: List[CrosschainTransaction] = []

            def view_executor(c_chain, c_to, c_data):
                try:
                    child_node, child_result = build_view(c_chain, c_to, c_data)
                except BuildError as exc:
                    raise ExecutionError(exc.reason, str(exc)) from exc
                children.append(child_node)
                return child_result

            def tx_recorder(c_chain, c_to, c_data):
                try:
                    child_node = build_tx(c_chain, c_to, c_data, 0, is_root=False)
                except BuildError as exc:
                    # surface the child's reason without re-wrapping
                    raise ExecutionError(exc.reason, str(exc)) from exc
                children.append(child_node)
                from .sidechain import ExpectedCall
                return ExpectedCall(is_view=False, target_sidechain_id=c_chain,
                                    to=c_to, data=c_data, subtree=child_node)

            try:
                state.dry_run(to, data, sender=account.address, value=value,
                              view_executor=view_executor, tx_recorder=tx_recorder)
            except ExecutionError as exc:
                raise BuildError(exc.reason, str(exc)) from exc
            return CrosschainTransaction(
                tx_type=TxType.ORIGINATING if is_root else TxType.SUBORDINATE_TX,
                coordination_blockchain_id=coord_id,
                coordination_contract_address=coord_addr,
                crosschain_timeout_blocks=timeout_blocks if is_root else None,
                crosschain_tx_id=tx_id,
                originating_sidechain_id=origin,
                target_sidechain_id=None if is_root else chain_id,
                nonce=allocate_nonce(chain_id),
                to=to, data=data, value=value,
                subordinates=tuple(children))

        return build_tx(entry.sidechain_id, entry.to, entry.data, entry.value,
                        is_root=True)

    def build_crosschain_view(self, mn_name: str, entry: CallSpec,
                              coordination_ref: Tuple[SidechainId, bytes],
                              tx_id: Optional[CrosschainTxId] = None
                              ) -> CrosschainTransaction:
        """All-view tree rooted at the entry call."""
        mn = self.multichain_nodes[mn_name]
        coord_id, coord_addr = coordination_ref
        tx_id = tx_id or self.new_tx_id()
        origin = entry.sidechain_id

        def build_view(chain_id, to, data):
            if chain_id not in mn.members or chain_id not in self.sidechains:
                raise BuildError(MISSING_SIDECHAIN, chain_id.short())
            state = self.sidechains[chain_id].state
            children = []

            def child_view_executor(c_chain, c_to, c_data):
                try:
                    node, result = build_view(c_chain, c_to, c_data)
                except BuildError as exc:
                    raise ExecutionError(exc.reason, str(exc)) from exc
                children.append(node)
                return result

            try:
                result = state.dry_run_view(to, data, sender=mn.account.address,
                                            view_executor=child_view_executor)
            except ExecutionError as exc:
                raise BuildError(exc.reason, str(exc)) from exc
            node = CrosschainTransaction(
                tx_type=TxType.SUBORDINATE_VIEW,
                coordination_blockchain_id=coord_id,
                coordination_contract_address=coord_addr,
                crosschain_tx_id=tx_id,
                originating_sidechain_id=origin,
                target_sidechain_id=chain_id,
                nonce=0, to=to, data=data, subordinates=tuple(children))
            return node, result

        node, _ = build_view(entry.sidechain_id, entry.to, entry.data)
        return node

    # -- audit queries -----------------------------------------------------------------

    def finalize_decisions(self, tx_id: CrosschainTxId) -> List[dict]:
        return [rec for rec in self.audit_log
                if rec["kind"] == "finalize" and rec["tx"] == tx_id]

    def participating_contracts(self, tx_id: CrosschainTxId) -> Set[tuple]:
        return {(rec["sidechain"], rec["contract"]) for rec in self.audit_log
                if rec["kind"] == "mined" and rec["tx"] == tx_id}

    def atomicity_ok(self, tx_id: CrosschainTxId) -> bool:
        """All participating contracts finalized the same way (or no
        contract was ever locked)."""
        participants = self.participating_contracts(tx_id)
        decisions: Dict[tuple, str] = {}
        for rec in self.finalize_decisions(tx_id):
            decisions[(rec["sidechain"], rec["contract"])] = rec["decision"]
        outcomes = {decisions.get(p) for p in participants}
        # pending (None) means still locked: not yet resolved, not atomicity loss;
        # run_to_quiescence before asserting.
        if not participants:
            return True
        return len(outcomes) == 1

    def committed_contracts(self, tx_id: CrosschainTxId) -> Set[tuple]:
        return {(rec["sidechain"], rec["contract"])
                for rec in self.finalize_decisions(tx_id)
                if rec["decision"] == "commit"}

    def run(self, max_ticks: int = 100_000):
        return self.net.run_until_quiescent(max_ticks=max_ticks)

    def dump_state_to_trace(self) -> None:
        """Record every contract's storage and every coordination entry
        in the trace (hex key/value pairs behind stable digests)."""
        for chain_id in sorted(self.sidechains, key=lambda s: s.value):
            state = self.sidechains[chain_id].state
            for address in sorted(state.contracts):
                self.net.record(f"chain:{chain_id.short()}", "dump",
                                f"storage:{address.hex()[:8]}",
                                state.storage_dump(address))
            self.net.record(f"chain:{chain_id.short()}", "dump", "balances",
                            {k.hex(): v for k, v in sorted(state.balances.items())})
        for (chain_id, address), chain in sorted(
                self.coordination.items(), key=lambda kv: kv[0][0].value):
            entries = {key.hex(): (entry.state.value, entry.timeout_block)
                       for key, entry in sorted(chain.entries.items())}
            self.net.record(f"coord:{chain_id.short()}", "dump",
                            f"entries:{len(entries)}", entries)


class ThreadSafeWorld:
    """Serializing facade for embedding a world behind threads: every
    public call takes one lock, preserving the single-writer event-loop
    contract."""

    def __init__(self, world: World):
        import threading
        self._world = world
        self._lock = threading.RLock()

    def __getattr__(self, name):
        attr = getattr(self._world, name)
        if not callable(attr):
            return attr
        lock = self._lock

        def serialized(*args, **kwargs):
            with lock:
                return attr(*args, **kwargs)
        return serialized
