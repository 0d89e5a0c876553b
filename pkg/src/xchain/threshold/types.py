"""Shared threshold-signing types and errors."""

from dataclasses import dataclass
from typing import Any, Dict, Tuple


class ThresholdError(ValueError):
    pass


class InvalidConfig(ThresholdError):
    pass


class InsufficientShares(ThresholdError):
    pass


class DuplicateShareIndex(ThresholdError):
    pass


class DealingInvalid(ThresholdError):
    """One or more dealings failed commitment verification."""

    def __init__(self, faulty_dealers):
        self.faulty_dealers = tuple(sorted(faulty_dealers))
        super().__init__(f"invalid dealings from dealers {list(self.faulty_dealers)}")


@dataclass(frozen=True)
class ThresholdConfig:
    """M-of-N signing parameters; f is the tolerated faulty validator count."""

    n: int
    f: int
    m: int

    def __post_init__(self):
        if self.n < 1:
            raise InvalidConfig(f"need at least one participant, got n={self.n}")
        if not 1 <= self.m <= self.n:
            raise InvalidConfig(f"threshold m={self.m} outside 1..{self.n}")
        if self.f < 0:
            raise InvalidConfig(f"negative fault tolerance f={self.f}")

    @classmethod
    def from_fault_tolerance(cls, n: int, f: int) -> "ThresholdConfig":
        """Derive the signing threshold as m = f + 1."""
        return cls(n=n, f=f, m=f + 1)


@dataclass(frozen=True)
class KeyShare:
    index: int
    scalar: int
    group_public_key: Any


@dataclass(frozen=True)
class SignatureShare:
    index: int
    point: Any


@dataclass(frozen=True)
class ThresholdSignature:
    point: Any


@dataclass(frozen=True)
class Dealing:
    """One dealer's contribution to an aggregated key generation.

    Contributions are plaintext polynomial evaluations per participant
    index (share transport encryption is out of scope for the
    simulator); commitments are one group element per coefficient.
    """

    dealer: int
    contributions: Dict[int, int]
    commitments: Tuple[Any, ...]
