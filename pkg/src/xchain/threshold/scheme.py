"""Threshold signature operations over pluggable group backends.

Two backends ship:

  * ``bn254``: BLS-style signatures. Secrets are Shamir shares over the
    curve order, partial signatures are H(m) scaled by the share in G1,
    public keys and Feldman commitments live in G2, and verification is
    the pairing relation e(H(m), pk) == e(sig, G2).

  * ``modp``: a fast non-hiding test double. The "group" is the scalar
    field itself (commitments reveal the coefficients), but every
    behavioural contract -- thresholds, Lagrange combination, Feldman
    dealing checks, verification failure on bad shares -- is identical.

All operations are pure functions of their inputs and seeds.
"""

from typing import Dict, List, Sequence

from ..hashing import keccak256
from . import bn254
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

ORDER = bn254.N  # scalar field shared by both backends


def _scalar_stream(domain: bytes, seed: int, count: int) -> List[int]:
    """Deterministic uniform-ish scalars derived by hashing."""
    out = []
    base = domain + seed.to_bytes(8, "big", signed=False)
    for k in range(count):
        digest = keccak256(base + k.to_bytes(4, "big"))
        out.append(int.from_bytes(digest, "big") % ORDER)
    return out


def _poly_eval(coeffs: Sequence[int], x: int) -> int:
    acc = 0
    for c in reversed(coeffs):
        acc = (acc * x + c) % ORDER
    return acc


def lagrange_at_zero(indices: Sequence[int]) -> Dict[int, int]:
    """Lagrange basis coefficients lambda_i evaluated at x = 0."""
    lams = {}
    for i in indices:
        num, den = 1, 1
        for j in indices:
            if j != i:
                num = num * j % ORDER
                den = den * (j - i) % ORDER
        lams[i] = num * pow(den, -1, ORDER) % ORDER
    return lams


class _ModPBackend:
    """Scalar-field stand-in group; see module docstring."""

    name = "modp"

    def commit(self, scalar):
        return scalar % ORDER

    def commit_add(self, a, b):
        return (a + b) % ORDER

    def commit_scale(self, a, k):
        return a * k % ORDER

    def commit_zero(self):
        return 0

    def hash_to_base(self, message: bytes):
        h = int.from_bytes(keccak256(b"modp-base" + message), "big") % ORDER
        return h if h != 0 else 1

    def sig_scale(self, base, scalar):
        return base * scalar % ORDER

    def sig_add(self, a, b):
        return (a + b) % ORDER

    def sig_zero(self):
        return 0

    def pair_check(self, public_key, message: bytes, sig_point) -> bool:
        return sig_point == self.hash_to_base(message) * public_key % ORDER

    def commit_bytes(self, c) -> bytes:
        return int(c).to_bytes(32, "big")

    def sig_bytes(self, s) -> bytes:
        return int(s).to_bytes(32, "big")


class _Bn254Backend:
    name = "bn254"

    def commit(self, scalar):
        return bn254.g2_mul(bn254.G2, scalar)

    def commit_add(self, a, b):
        return bn254.g2_add(a, b)

    def commit_scale(self, a, k):
        return bn254.g2_mul(a, k)

    def commit_zero(self):
        return None

    def hash_to_base(self, message: bytes):
        return bn254.hash_to_g1(message)

    def sig_scale(self, base, scalar):
        return bn254.g1_mul(base, scalar)

    def sig_add(self, a, b):
        return bn254.g1_add(a, b)

    def sig_zero(self):
        return None

    def pair_check(self, public_key, message: bytes, sig_point) -> bool:
        # e(H(m), pk) * e(-sig, G2) == 1
        if sig_point is not None and not bn254.g1_on_curve(sig_point):
            return False
        return bn254.pairing_check([
            (self.hash_to_base(message), public_key),
            (bn254.g1_neg(sig_point), bn254.G2),
        ])

    def commit_bytes(self, c) -> bytes:
        return bn254.g2_to_bytes(c)

    def sig_bytes(self, s) -> bytes:
        return bn254.g1_to_bytes(s)


class ThresholdScheme:
    """Dealer keygen, verifiable aggregated keygen, signing, combining
    and verification over one group backend."""

    def __init__(self, backend):
        self.backend = backend
        self.name = backend.name

    # -- key generation ----------------------------------------------------

    def keygen_dealer(self, config: ThresholdConfig, rng_seed: int):
        """Trusted-dealer share generation.

        Returns (shares, group_public_key). Any m of the n shares
        combine to a signature verifying under the public key.
        """
        coeffs = _scalar_stream(b"dealer", rng_seed, config.m)
        pk = self.backend.commit(coeffs[0])
        shares = [KeyShare(index=i, scalar=_poly_eval(coeffs, i), group_public_key=pk)
                  for i in range(1, config.n + 1)]
        return shares, pk

    def make_dealing(self, config: ThresholdConfig, dealer_index: int,
                     rng_seed: int) -> Dealing:
        """One participant acting as dealer for aggregated keygen."""
        coeffs = _scalar_stream(b"dkg", rng_seed ^ dealer_index, config.m)
        contributions = {j: _poly_eval(coeffs, j) for j in range(1, config.n + 1)}
        commitments = tuple(self.backend.commit(c) for c in coeffs)
        return Dealing(dealer=dealer_index, contributions=contributions,
                       commitments=commitments)

    def verify_dealing(self, dealing: Dealing, config: ThresholdConfig) -> bool:
        """Feldman check: commit(f(j)) must equal sum_k j^k * C_k for
        every participant contribution."""
        if len(dealing.commitments) != config.m:
            return False
        if set(dealing.contributions) != set(range(1, config.n + 1)):
            return False
        for j, contribution in dealing.contributions.items():
            expected = self._commitment_eval(dealing.commitments, j)
            if self.backend.commit(contribution) != expected:
                return False
        return True

    def dkg_round(self, dealings: Sequence[Dealing], config: ThresholdConfig):
        """Aggregate verified dealings into a key set.

        The result is functionally a dealer keygen whose secret is the
        sum of the dealers' secrets. Raises DealingInvalid naming every
        dealer whose contribution fails the commitment check.
        """
        if not dealings:
            raise ThresholdError("need at least one dealing")
        seen = set()
        for d in dealings:
            if d.dealer in seen:
                raise ThresholdError(f"duplicate dealing from dealer {d.dealer}")
            seen.add(d.dealer)
        faulty = [d.dealer for d in dealings if not self.verify_dealing(d, config)]
        if faulty:
            raise DealingInvalid(faulty)
        pk = self.backend.commit_zero()
        for d in dealings:
            pk = self.backend.commit_add(pk, d.commitments[0])
        shares = []
        for j in range(1, config.n + 1):
            scalar = sum(d.contributions[j] for d in dealings) % ORDER
            shares.append(KeyShare(index=j, scalar=scalar, group_public_key=pk))
        return shares, pk

    def share_publics(self, source, config: ThresholdConfig):
        """Per-index public shares derived from dealing commitments.

        ``source`` is either a single Dealing or a sequence of them
        (aggregated). Used to verify individual signature shares.
        """
        dealings = [source] if isinstance(source, Dealing) else list(source)
        agg = []
        for k in range(config.m):
            acc = self.backend.commit_zero()
            for d in dealings:
                acc = self.backend.commit_add(acc, d.commitments[k])
            agg.append(acc)
        return {j: self._commitment_eval(agg, j) for j in range(1, config.n + 1)}

    def public_share(self, share: KeyShare):
        """Public counterpart of one private share."""
        return self.backend.commit(share.scalar)

    def _commitment_eval(self, commitments, x: int):
        acc = self.backend.commit_zero()
        for c in reversed(commitments):
            acc = self.backend.commit_add(self.backend.commit_scale(acc, x), c)
        return acc

    # -- signing -----------------------------------------------------------

    def sign_share(self, share: KeyShare, message: bytes) -> SignatureShare:
        base = self.backend.hash_to_base(message)
        return SignatureShare(index=share.index,
                              point=self.backend.sig_scale(base, share.scalar))

    def verify_share(self, public_share, message: bytes,
                     sig_share: SignatureShare) -> bool:
        return self.backend.pair_check(public_share, message, sig_share.point)

    def combine(self, shares: Sequence[SignatureShare],
                config: ThresholdConfig) -> ThresholdSignature:
        """Lagrange-combine signature shares.

        The result is the same group element for any valid subset of at
        least m shares over one message.
        """
        indices = [s.index for s in shares]
        if len(set(indices)) != len(indices):
            raise DuplicateShareIndex(f"duplicate share indices in {indices}")
        if len(shares) < config.m:
            raise InsufficientShares(
                f"need {config.m} shares, got {len(shares)}")
        lams = lagrange_at_zero(indices)
        acc = self.backend.sig_zero()
        for s in shares:
            acc = self.backend.sig_add(acc, self.backend.sig_scale(s.point, lams[s.index]))
        return ThresholdSignature(point=acc)

    def verify(self, public_key, message: bytes,
               signature: ThresholdSignature) -> bool:
        return self.backend.pair_check(public_key, message, signature.point)

    # -- serialization helpers ----------------------------------------------

    def public_key_bytes(self, public_key) -> bytes:
        return self.backend.commit_bytes(public_key)

    def signature_bytes(self, signature: ThresholdSignature) -> bytes:
        return self.backend.sig_bytes(signature.point)


_SCHEMES = {
    "modp": ThresholdScheme(_ModPBackend()),
    "bn254": ThresholdScheme(_Bn254Backend()),
}


def get_scheme(name: str) -> ThresholdScheme:
    try:
        return _SCHEMES[name]
    except KeyError:
        raise InvalidConfig(f"unknown threshold scheme {name!r}") from None
