"""Deterministic simulator and protocol library for atomic crosschain
transactions across private sidechains."""

__version__ = "0.1.0"

from .engine import CallSpec, World, WorldConfig, TxHandle  # noqa: F401
from .wire import CrosschainTransaction, CrosschainTxId, SidechainId  # noqa: F401
