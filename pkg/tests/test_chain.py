import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import finite_difference_gradient
from reflectsim.chain import ChainModel, ChainParams, chain_constants
from reflectsim.domain import DomainError, active_set, check_membership, cone_decompose
from reflectsim.geometry import sample_boundary, verify_ues
from reflectsim.globules import PairPotential

S3 = math.sqrt(3.0)


def model(n=2, d=2, rm=1.0, rp=2.0):
    return ChainModel(ChainParams(n, d, rm, rp))


@pytest.mark.parametrize("n,count", [(2, 5), (4, 9)])
def test_constraint_count(n, count):
    assert len(model(n).build_domain()) == count


def test_params_validation():
    with pytest.raises(ValueError):
        ChainParams(1, 2, 1.0, 2.0)
    with pytest.raises(ValueError):
        ChainParams(3, 2, 1.0, 1.0)
    assert ChainParams(3, 2, 1.0, 2.0).m == 8


def test_bound_normals_are_constant():
    c = model()
    m = c.dim
    expected_lower = np.zeros(m)
    expected_lower[-2] = 1
    np.testing.assert_array_equal(c.normal_lower(), expected_lower)
    assert c.normal_upper()[-1] == -1 and np.count_nonzero(c.normal_upper()) == 1
    np.testing.assert_allclose(c.normal_equal()[-2:], [-1 / math.sqrt(2), 1 / math.sqrt(2)])
    for cid in ("lower", "upper", "equal"):
        con = c.domain.constraints[c.domain.index(cid)]
        np.testing.assert_allclose(con.normal(np.zeros(m)), c.normal(cid, np.zeros(m)), atol=1e-15)


def test_bond_min_normal_example():
    c = model()
    x = c.pack([[0, 0], [-1, 0]], 1.0, 1.5)
    n = c.normal_bond_min(0, x)
    np.testing.assert_allclose(n, [1 / S3, 0, -1 / S3, 0, -1 / S3, 0])
    assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)


def test_bond_max_normal_example():
    c = model()
    x = c.pack([[0, 0], [-1.5, 0]], 1.0, 1.5)
    n = c.normal_bond_max(0, x)
    np.testing.assert_allclose(n, [-1 / S3, 0, 1 / S3, 0, 0, 1 / S3])
    with pytest.raises(DomainError):
        c.normal_bond_min(0, x)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_normals_match_finite_differences(seed):
    c = model(4)
    for s in sample_boundary(c, 4, seed):
        for cid, n in zip(s.active, s.normals):
            assert np.linalg.norm(n) == pytest.approx(1.0, abs=1e-12)
            con = c.domain.constraints[c.domain.index(cid)]
            fd = finite_difference_gradient(con.func, s.x, 1e-6 * c.params.r_plus)
            np.testing.assert_allclose(n, fd / np.linalg.norm(fd), atol=1e-9)


def test_compatibility_example():
    c = model()
    x = c.pack([[0, 0], [1, 0]], 1.0, 1.5)
    assert active_set(c.domain, x) == ["bondmin_1", "lower"]
    v = c.compatibility_raw(x)
    np.testing.assert_allclose(v, [-0.5, 0, 0.5, 0, 0.5, -0.5])
    assert v @ c.normal_lower() == pytest.approx(0.5)
    assert v @ c.normal_bond_min(0, x) == pytest.approx(1 / (2 * S3))


def test_compatibility_top_corner():
    c = model(3)
    rp = c.params.r_plus
    x = c.pack([[0, 0], [rp, 0], [rp, rp]], rp, rp)
    v = c.compatibility_raw(x)
    assert v @ c.normal_upper() == pytest.approx(rp / 2)
    assert v @ c.normal_equal() >= rp / math.sqrt(2) - 1e-12


def test_compatibility_interior_raises():
    c = model()
    with pytest.raises(DomainError):
        c.compatibility_vector(c.default_initial())


@pytest.mark.parametrize("n", [2, 3, 4])
def test_compatibility_property(n):
    c = model(n)
    bound = n**3 * c.params.r_plus**2 / 2
    worst = np.inf
    for s in sample_boundary(c, 3000, n):
        v = c.compatibility_raw(s.x)
        assert v @ v <= bound + 1e-9
        worst = min(worst, float((s.normals @ s.l0).min()))
    assert worst >= c.beta0 - 1e-12


def test_constants_examples():
    k = chain_constants(ChainParams(2, 2, 1.0, 2.0))
    assert k.alpha == pytest.approx(1 / 16, rel=1e-12)
    assert k.beta0 == pytest.approx(1 / (4 * math.sqrt(12)), rel=1e-12)
    doubled = chain_constants(ChainParams(2, 2, 2.0, 4.0))
    assert doubled.alpha == pytest.approx(2 * k.alpha, rel=1e-12)
    assert doubled.beta == pytest.approx(k.beta, rel=1e-12)


def test_delta_candidates_take_smaller():
    c = model(3)
    cands = c.delta_candidates()
    assert cands["stated"] / cands["derived"] == pytest.approx(9 / 8)
    assert c.constants().delta == cands["derived"]


def test_equal_corner_decomposition_is_min_norm():
    # At lo = hi the two bond normals of a bond sum to a multiple of the
    # lo = hi normal; the decomposition must split the least-norm way.
    c = model()
    x = c.pack([[0, 0], [1.5, 0]], 1.5, 1.5)
    dec = cone_decompose(c.domain, x, c.normal_equal())
    k = math.sqrt(2 / 3)
    a = 2 * k / (4 + 2 * k * k)
    assert dec["bondmin_1"] == pytest.approx(a, abs=1e-12)
    assert dec["bondmax_1"] == pytest.approx(a, abs=1e-12)
    assert dec["equal"] == pytest.approx(1 - a * k, abs=1e-12)


def test_bondmin_exterior_ball():
    c = model(3)
    samples = sample_boundary(c, 500, 9)
    radius = c.params.r_minus * S3 / 2
    for cid in ("bondmin_1", "bondmin_2"):
        out = verify_ues(c, samples, radius, 1000, 0, against=cid)
        assert out["checked_points"] > 0
        assert out["violations"] == 0


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_membership_invariant_under_translation_and_reversal(seed):
    c = model(4)
    rng = np.random.default_rng(seed)
    lo = rng.uniform(1, 1.5)
    hi = rng.uniform(lo, 2)
    steps = rng.standard_normal((3, 2))
    steps *= (rng.uniform(0.8, 2.2, 3) / np.linalg.norm(steps, axis=1))[:, None]
    pos = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
    x = c.pack(pos, lo, hi)
    inside = check_membership(c.domain, x)[0]
    assert check_membership(c.domain, c.pack(pos + rng.standard_normal(2), lo, hi))[0] == inside
    assert check_membership(c.domain, c.pack(pos[::-1], lo, hi))[0] == inside


def test_gradient_drift_positions_only():
    c = model(3)
    phi = PairPotential.gaussian(1.0, 1.0)
    x = c.default_initial()
    b = c.gradient_drift(phi, x)
    fd = finite_difference_gradient(lambda y: c.energy(phi, y), x, 1e-6)
    np.testing.assert_allclose(b, -0.5 * fd, atol=1e-6)
    assert b[c.lo_index] == 0 and b[c.hi_index] == 0


def test_bounds_submodel():
    sub = model().bounds_submodel()
    assert sub.coordinate_names() == ["lo", "hi"]
    assert check_membership(sub.domain, [1.2, 1.7])[0]
    assert not check_membership(sub.domain, [1.7, 1.2])[0]
    np.testing.assert_allclose(sub.reported_scales(), [1, 1, 1 / math.sqrt(2)])
