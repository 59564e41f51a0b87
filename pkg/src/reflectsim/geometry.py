"""Monte-Carlo certification of the boundary geometry of a particle model.

Boundary points are sampled per stratum (a small set of constraints meant to
be simultaneously active) and the three geometric hypotheses of the
reflection theory are checked on them: the compatibility vector makes an
angle bounded away from 90 degrees with every active normal, exterior balls
of radius alpha miss the domain, and normals near a point stay inside a cone
around its compatibility vector.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .domain import DomainError, ProjectionError, active_set, check_membership, cone_decompose, project
from .noise import _generator

SLIDE_ITERATIONS = 30
SEED_ATTEMPTS = 50
CONVEX_COMBINATIONS = 20
COMPATIBILITY_TOL = 1e-12


@dataclass
class BoundarySample:
    x: np.ndarray
    active: list[str]
    normals: np.ndarray  # (len(active), m), closed-form inward unit normals
    l0: np.ndarray
    stratum: tuple = ()

    def __post_init__(self):
        if not self.active:
            raise ValueError("a boundary sample needs at least one active constraint")


@dataclass
class GeometryCertificate:
    model: str
    samples: int
    min_compatibility: float | None = None
    beta0: float | None = None
    ues_alpha: float | None = None
    ues_violations: int | None = None
    unc_margin: float | None = None
    unc_beta: float | None = None
    unc_delta: float | None = None
    delta_candidates: dict = field(default_factory=dict)
    passed: dict = field(default_factory=dict)
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return all(self.passed.values())

    def to_dict(self):
        out = asdict(self)
        out["schema_version"] = 1
        out["ok"] = self.ok
        return out


def slide(domain, x, ids, iterations=SLIDE_ITERATIONS):
    """Gauss-Newton with minimum-norm steps onto ``g_k = 0`` for ``k`` in ``ids``."""
    idx = [domain.index(c) for c in ids]
    tol = domain.projection_tol
    x = np.array(x, dtype=float)
    for _ in range(iterations):
        g = domain.values(x)[idx]
        if np.max(np.abs(g)) <= tol:
            break
        J = domain.gradients(x, idx)
        step, *_ = np.linalg.lstsq(J, -g, rcond=None)
        x = x + step
    return x


def _boundary_point(model, rng, ids):
    domain = model.domain
    x = slide(domain, model.seed_configuration(rng, ids), ids)
    ok, _ = check_membership(domain, x)
    try:
        if not ok:
            x = project(domain, x).y
        ok, _ = check_membership(domain, x)
        if not ok:
            return None, []
        return x, active_set(domain, x)
    except (ProjectionError, DomainError):
        return None, []


def _make_sample(model, x, active, stratum=()):
    normals = np.array([model.normal(cid, x) for cid in active])
    return BoundarySample(x, active, normals, model.compatibility_vector(x), tuple(stratum))


def sample_boundary(model, count: int, seed: int) -> list[BoundarySample]:
    """Stratified boundary samples; strata cycle through ``model.boundary_strata()``.

    Each sample seeds a configuration near the stratum's constraints, slides
    onto them and re-projects if another constraint was crossed. A sample
    whose active set misses part of its stratum is retried; after
    ``SEED_ATTEMPTS`` failures any nonempty active set is accepted.
    """
    strata = model.boundary_strata()
    out = []
    for k in range(count):
        template = strata[k % len(strata)]
        rng = _generator(seed, 11, k)
        fallback = None
        for _ in range(SEED_ATTEMPTS):
            ids = model.stratum_ids(template, rng)
            x, active = _boundary_point(model, rng, ids)
            if x is None or not active:
                continue
            if set(ids) <= set(active):
                out.append(_make_sample(model, x, active, template))
                break
            fallback = fallback or (x, active)
        else:
            if fallback is None:
                raise RuntimeError(f"could not sample stratum {template}")
            out.append(_make_sample(model, *fallback, template))
    return out


def _random_unit(rng, m):
    u = rng.standard_normal(m)
    return u / np.linalg.norm(u)


def _cone_normals(normals, rng, combos):
    """The individual normals plus ``combos`` normalized random convex combinations."""
    out = [n for n in normals]
    if len(normals) > 1:
        for _ in range(combos):
            w = rng.dirichlet(np.ones(len(normals)))
            v = w @ normals
            out.append(v / np.linalg.norm(v))
    return np.array(out)


def _ball(rng, center, radius, count):
    m = center.size
    u = rng.standard_normal((count, m))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    r = radius * rng.uniform(size=count) ** (1.0 / m)
    return center + r[:, None] * u


def verify_ues(model, samples, alpha, mc_points: int = 1000, seed: int = 0, against=None, combos: int = 1):
    """Count domain points inside open exterior balls ``B(x - alpha n, alpha)``.

    ``alpha`` is a number or a callable ``alpha(sample)``. ``against`` restricts
    membership to a single constraint set ``{g_k >= 0}`` (and then only that
    constraint's normal is used). Normals are the active normals plus
    ``combos`` random convex combinations.
    """
    domain = model.domain
    rng = _generator(seed, 13)
    violations = 0
    points = 0
    bad = Counter()
    alphas = []
    for s in samples:
        a = float(alpha(s) if callable(alpha) else alpha)
        if a <= 0:
            raise ValueError("alpha must be positive")
        alphas.append(a)
        if against is None:
            normals = _cone_normals(s.normals, rng, combos)
        elif against in s.active:
            normals = s.normals[[s.active.index(against)]]
        else:
            continue
        for n in normals:
            pts = _ball(rng, s.x - a * n, a, mc_points)
            if against is None:
                inside = domain.contains(pts, tol=0.0)
            else:
                inside = domain.constraints[domain.index(against)].func(pts) >= 0
            hits = int(np.count_nonzero(inside))
            points += mc_points
            if hits:
                violations += hits
                bad["+".join(s.active)] += 1
    return {
        "alpha": min(alphas) if alphas else None,
        "violations": violations,
        "checked_points": points,
        "violating_active_sets": dict(bad),
        "passed": violations == 0,
    }


def _neighbours(model, s, delta, rng, count):
    """Boundary points within ``delta`` of ``s.x``, on subsets of its active set."""
    domain = model.domain
    out = []
    for _ in range(count):
        k = rng.integers(1, len(s.active) + 1)
        ids = list(rng.choice(s.active, size=k, replace=False))
        u = _random_unit(rng, s.x.size) * delta * rng.uniform(0.1, 0.5)
        y = slide(domain, s.x + u, ids)
        try:
            ok, _ = check_membership(domain, y)
            if not ok:
                y = project(domain, y).y
            ok, _ = check_membership(domain, y)
            if not ok or np.linalg.norm(y - s.x) > delta:
                continue
            active = active_set(domain, y)
            if active:
                out.append((y, active))
        except (ProjectionError, DomainError):
            continue
    return out


def _unc_margin(model, samples, beta, delta, rng, neighbours, tree):
    target = np.sqrt(1.0 - beta**2)
    margin = np.inf
    pairs = 0
    for i, s in enumerate(samples):
        ys = [(s.x, s.active)]
        ys += [(samples[j].x, samples[j].active) for j in tree.query_ball_point(s.x, delta) if j != i]
        ys += _neighbours(model, s, delta, rng, neighbours)
        for y, active in ys:
            try:
                normals = np.array([model.normal(cid, y) for cid in active])
            except DomainError:
                continue
            cone = _cone_normals(normals, rng, CONVEX_COMBINATIONS)
            margin = min(margin, float(np.min(cone @ s.l0)) - target)
            pairs += 1
    return margin, pairs


def verify_unc(model, samples, beta, delta, seed: int = 0, inflated_delta: float | None = 0.01, neighbours: int = 2):
    """Uniform normal cone check ``n . l_x >= sqrt(1 - beta^2)`` for nearby normals.

    Pass/fail uses ``delta``; the sweep at ``inflated_delta`` is informational.
    """
    rng = _generator(seed, 17)
    tree = cKDTree(np.array([s.x for s in samples])) if samples else None
    margin, pairs = _unc_margin(model, samples, beta, delta, rng, neighbours, tree) if samples else (np.inf, 0)
    out = {"beta": beta, "delta": delta, "margin": margin, "pairs": pairs, "passed": bool(margin >= 0)}
    if inflated_delta is not None and samples:
        m2, p2 = _unc_margin(model, samples, beta, inflated_delta, rng, neighbours, tree)
        out["inflated"] = {"delta": inflated_delta, "margin": m2, "pairs": p2}
    return out


def verify_compatibility(model, samples, seed: int = 0, directions: int = 1):
    """Minimum of ``l0 . n_k`` over samples and active constraints, plus the
    coefficient-sum bound for decompositions of ``l0`` and random cone directions."""
    beta0 = model.beta0
    rng = _generator(seed, 19)
    worst = np.inf
    max_sum = 0.0
    failures = 0
    for s in samples:
        dots = s.normals @ s.l0
        worst = min(worst, float(dots.min()))
        if dots.min() < beta0 - COMPATIBILITY_TOL:
            failures += 1
        cone = _cone_normals(s.normals, rng, directions)
        for v in np.vstack([s.l0[None, :], cone]):
            dec = cone_decompose(model.domain, s.x, v / np.linalg.norm(v))
            if dec.in_cone:
                max_sum = max(max_sum, dec.coefficient_sum)
    bound_ok = max_sum <= 1.0 / beta0 + 1e-6
    return {
        "min_compatibility": worst,
        "beta0": beta0,
        "failures": failures,
        "max_coefficient_sum": max_sum,
        "coefficient_bound": 1.0 / beta0,
        "passed": failures == 0 and bound_ok,
    }


def certify(model, count: int = 1000, seed: int = 0, mc_points: int = 1000, inflated_delta: float = 0.01,
            samples=None) -> GeometryCertificate:
    """Run all three checks with the model's own constants."""
    samples = sample_boundary(model, count, seed) if samples is None else samples
    const = model.constants()
    comp = verify_compatibility(model, samples, seed)
    ues = verify_ues(model, samples, const.alpha, mc_points, seed)
    unc = verify_unc(model, samples, const.beta, const.delta, seed, inflated_delta)
    return GeometryCertificate(
        model=model.name,
        samples=len(samples),
        min_compatibility=comp["min_compatibility"],
        beta0=const.beta0,
        ues_alpha=const.alpha,
        ues_violations=ues["violations"],
        unc_margin=unc["margin"],
        unc_beta=const.beta,
        unc_delta=const.delta,
        delta_candidates=model.delta_candidates(),
        passed={"compatibility": comp["passed"], "ues": ues["passed"], "unc": unc["passed"]},
        details={"compatibility": comp, "ues": ues, "unc": unc,
                 "strata": dict(Counter("+".join(s.active) for s in samples).most_common(20))},
    )
