"""Projected Euler-Maruyama integration of reflected SDEs.

One step moves the state with the unreflected Euler-Maruyama increment and
then projects it back onto the domain. The projection displacement is split
on the active inward normals; those coefficients are the discrete local-time
increments of the individual constraints.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .domain import Domain, ProjectionError, check_membership, project
from .globules import PairPotential
from .noise import NoiseSource, brownian_increments, refine


@dataclass
class SdeCoefficients:
    """Diffusion and drift of ``dX = sigma(X) dW + b(X) dt``.

    ``sigma`` is either a constant (scalar, diagonal vector or full matrix)
    or a callable returning one of those; ``drift`` is ``None`` (zero), a
    constant vector or a callable.
    """

    sigma: object = 1.0
    drift: object = None

    def sigma_at(self, x):
        return self.sigma(x) if callable(self.sigma) else self.sigma

    def drift_at(self, x):
        if self.drift is None:
            return 0.0
        return self.drift(x) if callable(self.drift) else self.drift

    def diffuse(self, x, dw):
        s = np.asarray(self.sigma_at(x), dtype=float)
        return s @ dw if s.ndim == 2 else s * dw


def gradient_system(phi: PairPotential, model) -> SdeCoefficients:
    """Identity diffusion, pairwise gradient drift on positions, zero elsewhere."""
    if phi.name == "zero":
        return SdeCoefficients(1.0, None)
    return SdeCoefficients(1.0, lambda x: model.gradient_drift(phi, x))


class LocalTimeLedger:
    """Per-constraint accumulated local times.

    ``totals`` holds the raw coefficients on the unit normals;
    :meth:`reported` rescales them to the model's own convention.
    """

    def __init__(self, ids, scales=None):
        self.ids = list(ids)
        self.totals = np.zeros(len(self.ids))
        self.last = np.zeros(len(self.ids))
        self.scales = np.ones(len(self.ids)) if scales is None else np.asarray(scales, dtype=float)

    def add(self, increments):
        increments = np.asarray(increments, dtype=float)
        if np.any(increments < 0):
            raise ValueError("local-time increments must be nonnegative")
        self.last = increments
        self.totals = self.totals + increments

    def reported(self):
        return self.totals * self.scales

    def snapshot(self):
        return dict(zip(self.ids, map(float, self.reported())))


@dataclass
class SimulationConfig:
    dt: float
    t_end: float
    seed: int = 0
    record_stride: int = 1
    max_depth: float | None = None  # defaults to the model's exterior-sphere radius
    max_iter: int = 50

    def __post_init__(self):
        if self.dt <= 0 or self.t_end < 0:
            raise ValueError("need dt > 0 and t_end >= 0")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")

    @property
    def steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class StepResult:
    x: np.ndarray
    increments: np.ndarray
    iterations: int
    distance: float
    coefficient_sum: float
    residual: float
    violation: float


@dataclass
class TrajectoryRecord:
    times: np.ndarray
    states: np.ndarray
    ledger: np.ndarray  # reported local times at each recorded time
    ids: list[str]
    names: list[str]
    diagnostics: dict = field(default_factory=dict)

    def column(self, name):
        return self.states[:, self.names.index(name)]

    def ledger_column(self, cid):
        return self.ledger[:, self.ids.index(cid)]


def step(x, coeffs: SdeCoefficients, domain: Domain, dt, noise, max_depth=None, max_iter=50, beta0=None):
    """One projected Euler-Maruyama step driven by the standard normal ``noise``.

    Raises :class:`ProjectionError` when the projection distance reaches
    ``max_depth``: beyond the exterior-sphere radius the projection is no
    longer guaranteed to be well defined and dt should be reduced.
    """
    dw = math.sqrt(dt) * np.asarray(noise, dtype=float)
    return _step_dw(x, coeffs, domain, dt, dw, max_depth, max_iter, beta0)


def _step_dw(x, coeffs, domain, dt, dw, max_depth, max_iter, beta0):
    x_half = x + coeffs.diffuse(x, dw) + coeffs.drift_at(x) * dt
    proj = project(domain, x_half, max_iter=max_iter, beta0=beta0)
    if max_depth is not None and proj.distance >= max_depth:
        raise ProjectionError(
            f"projection distance {proj.distance:.3g} reaches the exterior-sphere radius "
            f"{max_depth:.3g}; reduce dt",
            {"distance": proj.distance, "max_depth": max_depth},
        )
    dec = proj.decomposition
    return StepResult(
        proj.y, dec.coefficients, proj.iterations, proj.distance, dec.coefficient_sum, dec.residual,
        proj.violation,
    )


def simulate(config: SimulationConfig, model, coeffs: SdeCoefficients, x0=None, increments=None) -> TrajectoryRecord:
    """Run one trajectory.

    The noise of step ``s`` comes from the counter-based source keyed by
    ``config.seed``, unless explicit Brownian ``increments`` (shape
    ``(steps, m)``) are passed. Besides the recorded samples, the diagnostics
    track per-step quantities over the whole run: worst post-step violation,
    local-time increments charged to constraints that are not active after
    the step, largest coefficient sum and projection iterations.
    """
    domain = model.domain
    x = np.array(model.default_initial() if x0 is None else x0, dtype=float)
    ok, worst = check_membership(domain, x)
    if not ok:
        raise ValueError(f"initial configuration violates the domain by {worst:.3g}")

    steps = config.steps if increments is None else len(increments)
    dt = config.dt
    max_depth = config.max_depth if config.max_depth is not None else model.alpha
    beta0 = getattr(model, "beta0", None)
    ledger = LocalTimeLedger(domain.ids, model.reported_scales())
    source = NoiseSource(config.seed, domain.dim)
    sqdt = math.sqrt(dt)
    support_eps = 10 * domain.activity_tol

    n_rec = steps // config.record_stride + 1
    times = np.empty(n_rec)
    states = np.empty((n_rec, domain.dim))
    ledger_rec = np.empty((n_rec, len(domain)))
    times[0], states[0], ledger_rec[0] = 0.0, x, ledger.reported()

    max_violation = 0.0
    max_coef_sum = 0.0
    max_residual = 0.0
    max_iterations = 0
    reflected_steps = 0
    support_violations = 0
    r = 1
    for s in range(steps):
        dw = increments[s] if increments is not None else sqdt * source(s)
        res = _step_dw(x, coeffs, domain, dt, dw, max_depth, config.max_iter, beta0)
        x = res.x
        max_violation = max(max_violation, res.violation)
        if res.iterations:
            reflected_steps += 1
            ledger.add(res.increments)
            values = domain.values(x)
            support_violations += int(np.count_nonzero((res.increments > 0) & (values > support_eps)))
            max_coef_sum = max(max_coef_sum, res.coefficient_sum)
            max_residual = max(max_residual, res.residual)
            max_iterations = max(max_iterations, res.iterations)
        if (s + 1) % config.record_stride == 0:
            times[r], states[r], ledger_rec[r] = (s + 1) * dt, x, ledger.reported()
            r += 1

    diagnostics = {
        "steps": steps,
        "reflected_steps": reflected_steps,
        "max_violation": max_violation,
        "support_violations": support_violations,
        "max_coefficient_sum": max_coef_sum,
        "max_residual": max_residual,
        "max_projection_iterations": max_iterations,
        "beta0": beta0,
        "max_depth": max_depth,
    }
    return TrajectoryRecord(times, states, ledger_rec, domain.ids, model.coordinate_names(), diagnostics)


def self_convergence(config: SimulationConfig, model, coeffs: SdeCoefficients, dt_list, x0=None, replicas=1):
    """Strong self-convergence table for successively halved steps.

    ``dt_list`` must be decreasing with ratio 2. Noise is drawn at the coarsest
    step and refined by Brownian bridges, so every level sees the same
    Brownian path. For each consecutive pair of levels the table reports the
    largest state difference over the coarse time grid, averaged over
    ``replicas`` independent paths (seeds ``seed + r``).
    """
    dt_list = [float(h) for h in dt_list]
    for a, b in zip(dt_list, dt_list[1:]):
        if not math.isclose(a, 2 * b, rel_tol=1e-12):
            raise ValueError("dt_list must halve at each level")
    coarse = dt_list[0]
    steps = int(round(config.t_end / coarse))
    errors = np.zeros(len(dt_list) - 1)
    for rep in range(replicas):
        seed = config.seed + rep
        dw = brownian_increments(seed, coarse, steps, model.dim)
        paths = []
        for level, h in enumerate(dt_list):
            if level:
                dw = refine(dw, dt_list[level - 1], seed, level)
            cfg = SimulationConfig(h, config.t_end, seed, record_stride=2**level,
                                   max_depth=config.max_depth, max_iter=config.max_iter)
            paths.append(simulate(cfg, model, coeffs, x0, increments=dw).states)
        for k in range(len(dt_list) - 1):
            errors[k] += np.abs(paths[k] - paths[k + 1]).max()
    errors /= replicas
    return [
        {"dt": dt_list[k], "dt_half": dt_list[k + 1], "max_deviation": float(errors[k])}
        for k in range(len(errors))
    ]


def euler_maruyama(x0, coeffs: SdeCoefficients, dt, steps, seed) -> np.ndarray:
    """Unreflected Euler-Maruyama path with the same noise as :func:`simulate`."""
    x = np.array(x0, dtype=float)
    source = NoiseSource(seed, x.shape[0])
    out = np.empty((steps + 1, x.shape[0]))
    out[0] = x
    sqdt = math.sqrt(dt)
    for s in range(steps):
        x = x + coeffs.diffuse(x, sqdt * source(s)) + coeffs.drift_at(x) * dt
        out[s + 1] = x
    return out

