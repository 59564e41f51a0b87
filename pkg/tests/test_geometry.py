import json

import jsonschema
import numpy as np
import pytest

from reflectsim.chain import ChainModel, ChainParams
from reflectsim.domain import check_membership
from reflectsim.geometry import (
    certify,
    sample_boundary,
    slide,
    verify_compatibility,
    verify_unc,
    verify_ues,
)
from reflectsim.globules import GlobuleModel, GlobuleParams
from reflectsim.runspec import load_schema


@pytest.fixture(scope="module")
def glob2():
    g = GlobuleModel(GlobuleParams(2, 2, 1.0, 2.0))
    return g, sample_boundary(g, 400, 0)


@pytest.fixture(scope="module")
def chain3():
    c = ChainModel(ChainParams(3, 2, 1.0, 2.0))
    return c, sample_boundary(c, 400, 0)


def test_zero_count():
    assert sample_boundary(GlobuleModel(GlobuleParams(2, 2, 1.0, 2.0)), 0, 0) == []


def test_samples_on_boundary(glob2, chain3):
    for model, samples in (glob2, chain3):
        for s in samples:
            ok, worst = check_membership(model.domain, s.x)
            assert ok and worst <= model.activity_tol
            assert s.active
            assert s.normals.shape == (len(s.active), model.dim)


def test_globule_strata_present(glob2):
    _, samples = glob2
    kinds = {tuple(sorted({cid.split("_")[0] for cid in s.active})) for s in samples}
    assert ("contact",) in kinds
    assert ("rplus",) in kinds and ("rminus",) in kinds
    assert ("contact", "rplus") in kinds and ("contact", "rminus") in kinds


def test_chain_strata_present(chain3):
    _, samples = chain3
    kinds = {tuple(sorted({cid.split("_")[0] for cid in s.active})) for s in samples}
    for needed in [("bondmin",), ("bondmax",), ("lower",), ("upper",), ("bondmin", "lower"), ("bondmax", "upper")]:
        assert needed in kinds


def test_sampling_is_deterministic():
    g = GlobuleModel(GlobuleParams(3, 2, 1.0, 2.0))
    a, b = sample_boundary(g, 30, 4), sample_boundary(g, 30, 4)
    assert all(np.array_equal(s.x, t.x) for s, t in zip(a, b))


def test_slide_reaches_target():
    g = GlobuleModel(GlobuleParams(2, 2, 1.0, 2.0))
    x = slide(g.domain, g.pack([[0, 0], [3.2, 0.1]], [1.7, 1.4]), ["contact_1_2"])
    assert abs(g.domain.values(x)[g.domain.index("contact_1_2")]) <= g.domain.projection_tol


def test_ues_half_space_any_alpha(glob2):
    g, samples = glob2
    out = verify_ues(g, samples, 50.0, 200, 0, against="rplus_1")
    assert out["checked_points"] > 0 and out["violations"] == 0


def test_ues_certified_alpha(glob2, chain3):
    for model, samples in (glob2, chain3):
        assert verify_ues(model, samples, model.alpha, 300, 1)["violations"] == 0


def test_ues_inflated_alpha_finds_corner_violations():
    g = GlobuleModel(GlobuleParams(3, 2, 1.0, 2.0))
    samples = sample_boundary(g, 1000, 3)
    # The certified radius is conservative: ten times it is still clean.
    assert verify_ues(g, samples, 10 * g.alpha, 300, 1, combos=3)["violations"] == 0
    out = verify_ues(g, samples, 100 * g.alpha, 300, 1, combos=3)
    assert out["violations"] > 0
    assert any("+" in key for key in out["violating_active_sets"])


def test_ues_rejects_nonpositive_alpha(glob2):
    g, samples = glob2
    with pytest.raises(ValueError):
        verify_ues(g, samples[:1], 0.0, 10)


def test_unc_zero_distance_pair(glob2, chain3):
    for model, samples in (glob2, chain3):
        k = model.constants()
        out = verify_unc(model, samples, k.beta, k.delta, inflated_delta=None)
        assert out["passed"] and out["pairs"] >= len(samples)
        assert out["margin"] >= model.beta0 - np.sqrt(1 - k.beta**2) - 1e-12


def test_unc_single_constraint_patch():
    g = GlobuleModel(GlobuleParams(2, 2, 1.0, 2.0))
    samples = [s for s in sample_boundary(g, 200, 8) if s.active == ["contact_1_2"]]
    k = g.constants()
    out = verify_unc(g, samples, k.beta, k.delta, inflated_delta=0.01, neighbours=5)
    assert out["passed"]
    assert "inflated" in out


def test_compatibility_examples(glob2, chain3):
    for model, samples in (glob2, chain3):
        out = verify_compatibility(model, samples)
        assert out["passed"] and out["failures"] == 0
        assert out["min_compatibility"] >= model.beta0 - 1e-12
        assert out["max_coefficient_sum"] <= 1 / model.beta0 + 1e-6


def test_compatibility_single_half_space():
    # single active radius constraint: l0 . n = (r_minus / 2) / |v|
    g = GlobuleModel(GlobuleParams(2, 2, 1.0, 2.0))
    x = g.pack([[0, 0], [6, 0]], [2.0, 1.5])
    v = g.compatibility_raw(x)
    l0 = g.compatibility_vector(x)
    assert l0 @ g.normal_radius_plus(0) == pytest.approx(0.5 / np.linalg.norm(v), rel=1e-12)


def test_certificate_schema_and_determinism():
    c = ChainModel(ChainParams(2, 2, 1.0, 2.0))
    a = certify(c, 60, seed=2, mc_points=50)
    b = certify(c, 60, seed=2, mc_points=50)
    da, db = a.to_dict(), b.to_dict()
    assert json.dumps(da, sort_keys=True, default=float) == json.dumps(db, sort_keys=True, default=float)
    jsonschema.validate(json.loads(json.dumps(da, default=float)), load_schema("certificate"))
    assert a.ok == (a.ues_violations == 0 and a.passed["compatibility"] and a.passed["unc"])
    assert set(a.delta_candidates) == {"stated", "derived"}
