"""Curve-level checks for the pairing backend: parameter relations,
group laws, and the bilinearity relation e(k*P, Q) == e(P, k*Q) that
verification rests on."""

from xchain.threshold import bn254 as curve


def test_parameters_derive_from_u():
    u = curve.U
    assert int(curve.P) == 36 * u**4 + 36 * u**3 + 24 * u**2 + 6 * u + 1
    assert curve.N == 36 * u**4 + 36 * u**3 + 18 * u**2 + 6 * u + 1
    assert curve.ATE_LOOP_COUNT == 6 * u + 2


def test_generators_valid():
    assert curve.g1_on_curve(curve.G1)
    assert curve.g2_on_curve(curve.G2)
    assert curve.g1_mul(curve.G1, curve.N) is None
    assert curve.g2_mul(curve.G2, curve.N) is None


def test_group_law():
    p2 = curve.g1_add(curve.G1, curve.G1)
    p3 = curve.g1_add(p2, curve.G1)
    assert p3 == curve.g1_mul(curve.G1, 3)
    assert curve.g1_add(p2, curve.g1_neg(p2)) is None
    q2 = curve.g2_add(curve.G2, curve.G2)
    assert q2 == curve.g2_mul(curve.G2, 2)
    assert curve.g2_add(q2, curve.g2_neg(q2)) is None


def test_field_tower():
    import random
    rng = random.Random(0)
    p = int(curve.P)
    for _ in range(5):
        a = (rng.randrange(p), rng.randrange(p))
        assert curve.f2_mul(a, curve.f2_inv(a)) == curve.F2_ONE
    x = tuple((rng.randrange(p), rng.randrange(p)) for _ in range(6))
    assert curve.f12_mul(x, curve.f12_inv(x)) == curve.F12_ONE
    assert curve.f12_frobenius(x, 1) == curve.f12_pow(x, p)


def test_pairing_bilinear():
    e = curve.pairing(curve.G1, curve.G2)
    assert e != curve.F12_ONE  # non-degenerate
    a, b = 987654321987654321, 123456789123456789
    left = curve.pairing(curve.g1_mul(curve.G1, a), curve.g2_mul(curve.G2, b))
    right = curve.f12_pow(e, a * b % curve.N)
    assert left == right
    # the symmetric scaling relation
    assert curve.pairing(curve.g1_mul(curve.G1, a), curve.G2) \
        == curve.pairing(curve.G1, curve.g2_mul(curve.G2, a))


def test_pairing_product_check():
    k = 31337
    assert curve.pairing_check([
        (curve.g1_mul(curve.G1, k), curve.G2),
        (curve.g1_neg(curve.G1), curve.g2_mul(curve.G2, k)),
    ])
    assert not curve.pairing_check([
        (curve.g1_mul(curve.G1, k), curve.G2),
        (curve.g1_neg(curve.G1), curve.g2_mul(curve.G2, k + 1)),
    ])


def test_hash_to_g1():
    p1 = curve.hash_to_g1(b"hello")
    p2 = curve.hash_to_g1(b"hello")
    p3 = curve.hash_to_g1(b"world")
    assert p1 == p2
    assert p1 != p3
    assert curve.g1_on_curve(p1)
    assert curve.g1_on_curve(p3)
    # G1 has cofactor one: any curve point is in the group
    assert curve.g1_mul(p1, curve.N) is None


def test_point_serialization():
    assert len(curve.g1_to_bytes(curve.G1)) == 64
    assert len(curve.g2_to_bytes(curve.G2)) == 128
    assert curve.g1_to_bytes(None) == b"\x00" * 64
