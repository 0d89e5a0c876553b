"""Native contract handlers shipped with the simulator.

Each handler id maps selectors to python functions over the host
interface. Storage layout conventions live next to each handler.
Addresses are stored in slots as big-endian integers; sidechain ids by
their raw 256-bit value.
"""

from typing import Dict

from .sidechain import HandlerHost
from .wire import SidechainId, encode_call, selector

HANDLERS: Dict[str, dict] = {}


def handler(handler_id: str, function_name: str):
    def register(fn):
        HANDLERS.setdefault(handler_id, {})[selector(function_name)] = fn
        return fn
    return register


def _arg_int(args, i: int) -> int:
    return int.from_bytes(args[i], "big") if i < len(args) else 0


def _arg_address(args, i: int) -> bytes:
    raw = args[i]
    return raw.rjust(20, b"\x00")[-20:]


def _slot_address(host: HandlerHost, slot: int) -> bytes:
    return host.storage_get(slot).to_bytes(20, "big")


def _slot_chain(host: HandlerHost, slot: int) -> SidechainId:
    return SidechainId(host.storage_get(slot))


# --- oracle: price feed -------------------------------------------------------
# slot 0: current rate

@handler("oracle", "rate")
def oracle_rate(host, args):
    return host.storage_get(0)


@handler("oracle", "set_rate")
def oracle_set_rate(host, args):
    host.storage_set(0, _arg_int(args, 0))


# --- commodity: simple stock ledger ------------------------------------------
# slot 0: stock, slot 1: units sold

@handler("commodity", "buy")
def commodity_buy(host, args):
    amount = _arg_int(args, 0)
    stock = host.storage_get(0)
    if stock < amount:
        raise ValueError("out of stock")
    host.storage_set(0, stock - amount)
    host.storage_set(1, host.storage_get(1) + amount)


# --- conditional buyer (the oracle-gated purchase example) --------------------
# slot 0: oracle sidechain id, slot 1: oracle address
# slot 2: commodity sidechain id, slot 3: commodity address
# slot 4: purchases made

@handler("control", "condBuy")
def control_cond_buy(host, args):
    amount = _arg_int(args, 0)
    rate_raw = host.call_subordinate_view(
        _slot_chain(host, 0), _slot_address(host, 1), encode_call("rate"))
    rate = int.from_bytes(rate_raw, "big")
    if rate < 100:
        host.emit_subordinate_tx(
            _slot_chain(host, 2), _slot_address(host, 3),
            encode_call("buy", amount))
        host.storage_set(4, host.storage_get(4) + 1)


# --- atomic swap registration (nonlockable by design) --------------------------
# slot 0: local execution contract address
# slot 1: offered rate (counterpart wei per local wei)
# slot 2: counterpart sidechain id
# slot 3: counterpart registration contract address
# slot 4: counterpart execution contract address
# slot 5: registered flag

@handler("swap_registration", "register")
def swap_register(host, args):
    host.storage_set(0, int.from_bytes(_arg_address(args, 0), "big"))
    host.storage_set(1, _arg_int(args, 1))
    host.storage_set(2, _arg_int(args, 2))
    host.storage_set(3, int.from_bytes(_arg_address(args, 3), "big"))
    host.storage_set(4, int.from_bytes(_arg_address(args, 4), "big"))
    host.storage_set(5, 1)


@handler("swap_registration", "confirm")
def swap_confirm(host, args):
    """1 if the given execution contract is the registered one here."""
    exec_addr = _arg_address(args, 0)
    registered = host.storage_get(5) == 1
    return 1 if registered and _slot_address(host, 0) == exec_addr else 0


@handler("swap_registration", "match_offer")
def swap_match_offer(host, args):
    """Return the local execution contract address when an offer at or
    under the caller's rate limit exists and the counterpart
    registration contract confirms the paired execution contract on its
    own sidechain."""
    max_rate = _arg_int(args, 0)
    if host.storage_get(5) != 1 or host.storage_get(1) > max_rate:
        return b""
    confirmed = host.call_subordinate_view(
        _slot_chain(host, 2), _slot_address(host, 3),
        encode_call("confirm", host.storage_get(4)))
    if int.from_bytes(confirmed, "big") != 1:
        return b""
    return _slot_address(host, 0)


# --- atomic swap execution (lockable; one per offer) ----------------------------
# slot 0: rate (counterpart wei per local wei)
# slot 1: beneficiary address (offer owner's account, counterpart chain for
#         the paying side, local chain for the receiving side)
# slot 2: counterpart sidechain id
# slot 3: counterpart execution contract address
# slot 4: total value swapped through this contract

@handler("swap_execution", "swap")
def swap_execute(host, args):
    """Entry point on the offering sidechain. Transfers part of the
    offered value to the caller and dispatches the counterpart payment
    as a subordinate transaction; any amount up to the contract balance
    works, full-value swaps are not required."""
    amount = _arg_int(args, 0)
    if amount <= 0 or host.balance_of(host.self_address) < amount:
        raise ValueError("swap amount exceeds offered value")
    rate = host.storage_get(0)
    counterpart_amount = amount * rate
    host.emit_subordinate_tx(
        _slot_chain(host, 2), _slot_address(host, 3),
        encode_call("pay", counterpart_amount))
    host.transfer(host.caller, amount)
    host.storage_set(4, host.storage_get(4) + amount)


@handler("swap_execution", "pay")
def swap_pay(host, args):
    """Counterpart leg: the caller (the swapping account, which signed
    the whole crosschain transaction) pays into this contract for the
    offer owner to withdraw."""
    amount = _arg_int(args, 0)
    host.transfer_from_caller(host.self_address, amount)
    host.storage_set(4, host.storage_get(4) + amount)


@handler("swap_execution", "withdraw")
def swap_withdraw(host, args):
    owner = _slot_address(host, 1)
    if host.caller != owner:
        raise ValueError("only the offer owner withdraws")
    amount = host.balance_of(host.self_address)
    host.transfer(owner, amount)


# --- market stub: lockable counters for contention scenarios --------------------
# slot 0: buys, slot 1: sells

@handler("market_stub", "buy")
def market_buy(host, args):
    host.storage_set(0, host.storage_get(0) + 1)


@handler("market_stub", "sell")
def market_sell(host, args):
    host.storage_set(1, host.storage_get(1) + 1)


# --- the two mutually-contending caller contracts ------------------------------
# slot 0/1: first target (sidechain id, address)
# slot 2/3: second target (sidechain id, address)
# slot 4: completed round counter

@handler("contract_one", "foo")
def contract_one_foo(host, args):
    host.emit_subordinate_tx(_slot_chain(host, 0), _slot_address(host, 1),
                             encode_call("buy"))
    host.emit_subordinate_tx(_slot_chain(host, 2), _slot_address(host, 3),
                             encode_call("sell"))
    host.storage_set(4, host.storage_get(4) + 1)


@handler("contract_two", "bar")
def contract_two_bar(host, args):
    host.emit_subordinate_tx(_slot_chain(host, 0), _slot_address(host, 1),
                             encode_call("sell"))
    host.emit_subordinate_tx(_slot_chain(host, 2), _slot_address(host, 3),
                             encode_call("buy"))
    host.storage_set(4, host.storage_get(4) + 1)


# --- proxy: forwards one state-updating call to a configured target -------------
# slot 0: target sidechain id, slot 1: target address

@handler("proxy", "relay")
def proxy_relay(host, args):
    host.emit_subordinate_tx(
        _slot_chain(host, 0), _slot_address(host, 1),
        encode_call("add", _arg_int(args, 0), _arg_int(args, 1)))


# --- chained reader: a view that recursively reads through other chains ----------
# slot 0: next sidechain id (0 = end of chain), slot 1: next address
# slot 2: local value

@handler("chained_reader", "read_chain")
def chained_read(host, args):
    total = host.storage_get(2)
    if host.storage_get(0) != 0:
        downstream = host.call_subordinate_view(
            _slot_chain(host, 0), _slot_address(host, 1),
            encode_call("read_chain"))
        total += int.from_bytes(downstream, "big")
    return total


# --- storage cell: minimal handler for protocol-level tests ---------------------

@handler("cell", "put")
def cell_put(host, args):
    host.storage_set(_arg_int(args, 0), _arg_int(args, 1))


@handler("cell", "get")
def cell_get(host, args):
    return host.storage_get(_arg_int(args, 0))


@handler("cell", "add")
def cell_add(host, args):
    key = _arg_int(args, 0)
    host.storage_set(key, host.storage_get(key) + _arg_int(args, 1))
