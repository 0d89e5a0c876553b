from .types import (
    Dealing,
    DealingInvalid,
    DuplicateShareIndex,
    InsufficientShares,
    InvalidConfig,
    KeyShare,
    SignatureShare,
    ThresholdConfig,
    ThresholdError,
    ThresholdSignature,
)
from .scheme import ORDER, ThresholdScheme, get_scheme, lagrange_at_zero

__all__ = [
    "Dealing",
    "DealingInvalid",
    "DuplicateShareIndex",
    "InsufficientShares",
    "InvalidConfig",
    "KeyShare",
    "SignatureShare",
    "ThresholdConfig",
    "ThresholdError",
    "ThresholdSignature",
    "ORDER",
    "ThresholdScheme",
    "get_scheme",
    "lagrange_at_zero",
]
