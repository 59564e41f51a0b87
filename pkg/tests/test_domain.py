import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import nnls as scipy_nnls

from oracles import grid_cone_oracle, kkt_projection
from reflectsim.domain import (
    Domain,
    DomainError,
    ProjectionError,
    active_set,
    check_membership,
    cone_decompose,
    half_space,
    project,
)
from reflectsim.globules import GlobuleModel, GlobuleParams
from reflectsim.nnls import nnls, nonneg_qp


@pytest.fixture
def pair():
    return GlobuleModel(GlobuleParams(2, 2, 1.0, 2.0))


def box(dim=2, eps=1e-9):
    e = np.eye(dim)
    cons = [half_space(f"lo{k}", e[k], 0.0) for k in range(dim)]
    cons += [half_space(f"hi{k}", -e[k], -1.0) for k in range(dim)]
    return Domain(cons, eps, dim)


# nnls


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_nnls_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((6, 3))
    b = rng.standard_normal(6)
    c, res = nnls(A, b)
    c_ref, res_ref = scipy_nnls(A, b)
    assert res == pytest.approx(res_ref, abs=1e-10)
    np.testing.assert_allclose(c, c_ref, atol=1e-9)


def test_nnls_dependent_columns_reconstruct():
    n = np.array([1.0, 0.0])
    A = np.column_stack([n, n, [0.0, 1.0]])
    c, res = nnls(A, np.array([0.6, 0.8]))
    assert res < 1e-12
    assert np.all(c >= 0)
    # min-norm split between the duplicated columns
    assert c[0] == pytest.approx(c[1])


def test_nonneg_qp_kkt():
    rng = np.random.default_rng(3)
    M = rng.standard_normal((4, 4))
    G = M @ M.T + 0.1 * np.eye(4)
    h = rng.standard_normal(4)
    lam = nonneg_qp(G, h)
    grad = G @ lam - h
    assert np.all(lam >= 0)
    assert np.all(grad >= -1e-10)
    assert abs(lam @ grad) < 1e-10


# membership and active sets


def test_membership_examples(pair):
    dom = pair.domain
    interior = pair.pack([[0, 0], [5, 0]], [1.5, 1.5])
    assert check_membership(dom, interior) == (True, 0.0)
    assert active_set(dom, interior) == []
    overlap = pair.pack([[0, 0], [1.9, 0]], [1.0, 1.0])
    ok, worst = check_membership(dom, overlap)
    assert not ok and worst == pytest.approx(0.1)
    touching = pair.pack([[0, 0], [2, 0]], [1.0, 1.0])
    assert check_membership(dom, touching) == (True, 0.0)


def test_active_set_contact_and_radius(pair):
    contact = pair.pack([[0, 0], [2.5, 0]], [1.25, 1.25])
    assert active_set(pair.domain, contact) == ["contact_1_2"]
    corner = pair.pack([[0, 0], [3.5, 0]], [2.0, 1.5])
    assert set(active_set(pair.domain, corner)) == {"contact_1_2", "rplus_1"}


def test_active_set_rejects_deep_violation(pair):
    x = pair.pack([[0, 0], [5, 0]], [2.0 + 1e-6, 1.5])
    with pytest.raises(DomainError):
        active_set(pair.domain, x)


# cone decomposition


def test_cone_identity(pair):
    x = pair.pack([[0, 0], [2.5, 0]], [1.25, 1.25])
    n = pair.normal("contact_1_2", x)
    dec = cone_decompose(pair.domain, x, n)
    assert dec["contact_1_2"] == pytest.approx(1.0)
    assert dec.residual < 1e-12 and dec.in_cone


def test_cone_outward_vector_not_in_cone(pair):
    x = pair.pack([[0, 0], [2.5, 0]], [1.25, 1.25])
    n = pair.normal("contact_1_2", x)
    dec = cone_decompose(pair.domain, x, -n)
    # 1-D scan of |c n + n| over c >= 0
    scan = min(np.linalg.norm(c * n + n) for c in np.linspace(0, 5, 501))
    assert dec.residual == pytest.approx(scan)
    assert dec.residual >= 1.0 - 1e-12
    assert not dec.in_cone


def test_cone_two_normals_against_grid(pair):
    x = pair.pack([[0, 0], [3.5, 0]], [2.0, 1.5])
    na, nb = pair.normal("contact_1_2", x), pair.normal("rplus_1", x)
    v = 0.6 * na + 0.8 * nb
    v /= np.linalg.norm(v)
    dec = cone_decompose(pair.domain, x, v)
    c_ref, res_ref = grid_cone_oracle(np.array([na, nb]), v)
    np.testing.assert_allclose([dec["contact_1_2"], dec["rplus_1"]], c_ref, atol=1e-6)
    assert dec.residual <= res_ref + 1e-9


def test_cone_requires_active_constraint_and_unit_vector(pair):
    x = pair.pack([[0, 0], [5, 0]], [1.5, 1.5])
    with pytest.raises(DomainError):
        cone_decompose(pair.domain, x, np.eye(pair.dim)[0])
    with pytest.raises(ValueError):
        cone_decompose(pair.domain, x, 2 * np.eye(pair.dim)[0])


def test_cone_coefficients_zero_off_active_set(pair):
    x = pair.pack([[0, 0], [3.5, 0]], [2.0, 1.5])
    v = pair.normal("rplus_1", x)
    dec = cone_decompose(pair.domain, x, v)
    inactive = [cid for cid in pair.domain.ids if cid not in dec.active]
    assert all(dec[cid] == 0.0 for cid in inactive)
    assert np.all(dec.coefficients >= 0)


def test_cone_bound_check_raises():
    dom = Domain([half_space("a", [1.0, 0.0], 0.0), half_space("b", [-1.0, 1.0], 0.0)], 1e-9, 2)
    v = np.array([0.0, 1.0])
    dec = cone_decompose(dom, np.zeros(2), v)
    assert dec.in_cone and dec.coefficient_sum > 1.0
    with pytest.raises(DomainError):
        cone_decompose(dom, np.zeros(2), v, beta0=1.0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_cone_recovers_random_combination(seed):
    rng = np.random.default_rng(seed)
    model = GlobuleModel(GlobuleParams(3, 2, 1.0, 2.0))
    # triangle cluster touching the upper radius bound
    x = model.pack([[0, 0], [4, 0], [2, 2 * np.sqrt(3)]], [2.0, 2.0, 2.0])
    active = active_set(model.domain, x)
    assert len(active) == 6
    N = np.array([model.normal(cid, x) for cid in active])
    v = rng.uniform(0, 1, len(active)) @ N
    v /= np.linalg.norm(v)
    dec = cone_decompose(model.domain, x, v, beta0=model.beta0)
    recon = sum(dec[cid] * n for cid, n in zip(active, N))
    assert np.linalg.norm(recon - v) <= 1e-8
    assert dec.coefficient_sum <= 1.0 / model.beta0 + 1e-6


# projection


def test_project_inside_is_identity(pair):
    x = pair.pack([[0, 0], [5, 0]], [1.5, 1.5])
    proj = project(pair.domain, x)
    assert np.array_equal(proj.y, x)
    assert not proj.decomposition.coefficients.any()


def test_project_radius_overshoot(pair):
    eps = 1e-3
    x = pair.pack([[0, 0], [5, 0]], [2.0 + eps, 1.5])
    proj = project(pair.domain, x)
    assert proj.y[pair.radius_index(0)] == pytest.approx(2.0, abs=1e-15)
    assert proj.decomposition["rplus_1"] == pytest.approx(eps, rel=1e-9)
    others = [cid for cid in pair.domain.ids if cid != "rplus_1"]
    assert all(proj.decomposition[cid] == 0 for cid in others)


def test_project_box_corner_exact():
    dom = box()
    proj = project(dom, np.array([1.3, -0.2]))
    np.testing.assert_allclose(proj.y, [1.0, 0.0], atol=1e-15)
    assert proj.decomposition["hi0"] == pytest.approx(0.3)
    assert proj.decomposition["lo1"] == pytest.approx(0.2)


def test_project_corner_matches_kkt_oracle(pair):
    rng = np.random.default_rng(11)
    base = pair.pack([[0, 0], [3.5, 0]], [2.0, 1.5])
    na, nb = pair.normal("contact_1_2", base), pair.normal("rplus_1", base)
    for _ in range(20):
        w = rng.dirichlet([1, 1])
        out = w @ np.array([na, nb])
        x = base - rng.uniform(0.001, 0.5) * pair.alpha * out / np.linalg.norm(out) + 1e-3 * rng.standard_normal(pair.dim)
        if check_membership(pair.domain, x)[0]:
            continue
        proj = project(pair.domain, x)
        y_ref, dist = kkt_projection(pair.domain, x, pair.alpha)
        assert np.linalg.norm(proj.y - y_ref) <= 1e-6 * max(dist, 1e-12)


def test_project_idempotent(pair):
    x = pair.pack([[0, 0], [3.45, 0.1]], [2.03, 1.5])
    first = project(pair.domain, x)
    second = project(pair.domain, first.y)
    assert np.array_equal(second.y, first.y)
    assert not second.decomposition.coefficients.any()


def test_project_nonconvergence_raises(pair):
    x = pair.pack([[0, 0], [0.5, 0]], [2.5, 1.5])
    with pytest.raises(ProjectionError) as info:
        project(pair.domain, x, max_iter=1)
    assert "iterations" in info.value.diagnostics


def test_domain_rejects_duplicate_ids():
    with pytest.raises(ValueError):
        Domain([half_space("a", [1.0], 0.0), half_space("a", [-1.0], -1.0)], 1e-9, 1)
