"""Domains defined as intersections of smooth scalar constraints ``g_k(x) >= 0``.

A :class:`Domain` answers the geometric queries a reflected diffusion needs:
which constraints are active at a point, how a unit vector decomposes on the
active inward normals, and how to pull an infeasible point back onto the
domain while recording how much each constraint pushed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .nnls import nnls, nonneg_qp

CONE_RESIDUAL_TOL = 1e-8
COEFFICIENT_BOUND_SLACK = 1e-6


class DomainError(ValueError):
    """A configuration or query is incompatible with the domain."""


class ProjectionError(RuntimeError):
    """The projection back onto the domain failed (usually dt is too large)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class Constraint:
    """One constraint ``g(x) >= 0``.

    ``func`` and ``grad`` accept a single configuration of shape ``(m,)``;
    ``func`` must also accept a batch of shape ``(N, m)`` and return ``(N,)``.
    """

    id: str
    func: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]

    def eval(self, x):
        return self.func(x)

    def gradient(self, x):
        return self.grad(x)

    def normal(self, x):
        g = self.grad(x)
        norm = np.linalg.norm(g)
        if norm == 0.0:
            raise DomainError(f"constraint {self.id} has a vanishing gradient")
        return g / norm


@dataclass(frozen=True)
class Domain:
    """Intersection of the constraint sets, with a numerical activity band."""

    constraints: tuple[Constraint, ...]
    activity_tol: float
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        if self.activity_tol <= 0:
            raise ValueError("activity_tol must be positive")
        ids = [c.id for c in self.constraints]
        if len(set(ids)) != len(ids):
            raise ValueError("constraint ids must be unique")

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.constraints]

    def __len__(self):
        return len(self.constraints)

    def index(self, cid: str) -> int:
        return self.ids.index(cid)

    def values(self, x):
        """Constraint values; ``(K,)`` for one point, ``(N, K)`` for a batch."""
        x = np.asarray(x, dtype=float)
        if not self.constraints:
            return np.zeros(x.shape[:-1] + (0,))
        return np.stack([c.func(x) for c in self.constraints], axis=-1)

    def contains(self, x, tol=0.0):
        """Vectorized membership test ``g_k(x) >= -tol`` for all k."""
        v = self.values(x)
        return np.all(v >= -tol, axis=-1)

    def gradients(self, x, idx=None):
        idx = range(len(self.constraints)) if idx is None else idx
        return np.array([self.constraints[k].grad(x) for k in idx]).reshape(-1, self.dim)

    def normals(self, x, idx=None):
        g = self.gradients(x, idx)
        norms = np.linalg.norm(g, axis=1)
        if np.any(norms == 0.0):
            raise DomainError("vanishing constraint gradient")
        return g / norms[:, None]

    @property
    def projection_tol(self):
        # Feasibility target of the projection, well inside the activity band.
        return 1e-3 * self.activity_tol


@dataclass
class ConeDecomposition:
    """Nonnegative coefficients of a vector on the active inward normals.

    ``coefficients`` is aligned with ``ids`` (every constraint of the domain,
    zero where inactive). ``scale`` is the norm of the decomposed vector, so
    ``coefficients / scale`` decomposes the corresponding unit direction.
    """

    ids: list[str]
    coefficients: np.ndarray
    residual: float
    scale: float = 1.0
    active: list[str] = field(default_factory=list)

    @property
    def in_cone(self) -> bool:
        return self.residual <= CONE_RESIDUAL_TOL * max(self.scale, 1.0)

    @property
    def coefficient_sum(self) -> float:
        """Sum of the coefficients of the unit direction."""
        if self.scale == 0.0:
            return 0.0
        return float(self.coefficients.sum() / self.scale)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.ids, map(float, self.coefficients)))

    def __getitem__(self, cid):
        return float(self.coefficients[self.ids.index(cid)])


class Projection(NamedTuple):
    y: np.ndarray
    decomposition: ConeDecomposition
    iterations: int
    distance: float
    violation: float = 0.0


def check_membership(domain: Domain, x) -> tuple[bool, float]:
    v = domain.values(x)
    if v.size == 0:
        return True, 0.0
    worst = max(0.0, -float(v.min()))
    return bool(worst <= domain.activity_tol), worst


def active_set(domain: Domain, x) -> list[str]:
    """Ids of the constraints with ``|g_k(x)| <= activity_tol``, in domain order."""
    v = domain.values(x)
    eps = domain.activity_tol
    if v.size and v.min() < -10 * eps:
        bad = domain.ids[int(np.argmin(v))]
        raise DomainError(f"configuration violates {bad} by {-v.min():.3e} (> 10 x activity tolerance)")
    return [cid for cid, gk in zip(domain.ids, v) if abs(gk) <= eps]


def _active_indices(domain, x):
    ids = active_set(domain, x)
    return [domain.index(cid) for cid in ids]


def cone_decompose(domain: Domain, x, v, beta0=None) -> ConeDecomposition:
    """Min-norm nonnegative decomposition of the unit vector ``v`` on the active normals.

    When ``beta0`` is given, the coefficient sum of an in-cone decomposition is
    checked against ``1 / beta0`` and a :class:`DomainError` is raised on
    violation.
    """
    v = np.asarray(v, dtype=float)
    if abs(np.linalg.norm(v) - 1.0) > 1e-9:
        raise ValueError("cone_decompose expects a unit vector")
    dec = _decompose(domain, x, v)
    if beta0 is not None and dec.in_cone:
        _check_bound(dec, beta0)
    return dec


def _decompose(domain, x, d):
    idx = _active_indices(domain, x)
    if not idx:
        raise DomainError("no active constraint at this configuration")
    N = domain.normals(x, idx).T
    c, residual = nnls(N, d)
    coefficients = np.zeros(len(domain))
    coefficients[idx] = c
    return ConeDecomposition(
        ids=domain.ids,
        coefficients=coefficients,
        residual=residual,
        scale=float(np.linalg.norm(d)),
        active=[domain.ids[k] for k in idx],
    )


def _check_bound(dec, beta0):
    if dec.coefficient_sum > 1.0 / beta0 + COEFFICIENT_BOUND_SLACK:
        raise DomainError(
            f"coefficient sum {dec.coefficient_sum:.6g} exceeds 1/beta0 = {1.0 / beta0:.6g}"
        )


def project(domain: Domain, x, max_iter: int = 50, beta0=None) -> Projection:
    """Pull ``x`` back onto the domain and decompose the displacement.

    Each iteration solves the Euclidean projection of ``x`` onto the
    linearization, at the current iterate, of every constraint that has been
    violated or active so far (a small nonnegative QP in dual form). The
    iteration stops once the iterate is feasible to ``projection_tol`` and
    stationary. The displacement ``y - x`` is then decomposed on the normals
    active at ``y``; its coefficients are the per-constraint local-time
    increments.
    """
    x = np.asarray(x, dtype=float)
    tol = domain.projection_tol
    values = domain.values(x)
    zero = ConeDecomposition(domain.ids, np.zeros(len(domain)), 0.0, 0.0)
    if values.size == 0 or values.min() >= -tol:
        worst = max(0.0, -float(values.min())) if values.size else 0.0
        return Projection(x.copy(), zero, 0, 0.0, worst)

    working = np.zeros(len(domain), dtype=bool)
    y = x.copy()
    step_tol = 1e-14 * max(1.0, float(np.abs(x).max()))
    for it in range(1, max_iter + 1):
        working |= values <= domain.activity_tol
        idx = np.flatnonzero(working)
        A = domain.gradients(y, idx)
        b = A @ y - values[idx]
        lam = nonneg_qp(A @ A.T, b - A @ x)
        y_new = x + A.T @ lam
        moved = float(np.linalg.norm(y_new - y))
        y = y_new
        values = domain.values(y)
        if values.min() >= -tol and moved <= max(step_tol, 1e-9 * np.linalg.norm(y - x)):
            break
    else:
        raise ProjectionError(
            f"projection did not converge in {max_iter} iterations; reduce dt",
            {"worst_violation": float(-values.min()), "iterations": max_iter},
        )

    disp = y - x
    dec = _decompose(domain, y, disp)
    if beta0 is not None:
        _check_bound(dec, beta0)
    return Projection(y, dec, it, float(np.linalg.norm(disp)), max(0.0, -float(values.min())))


@dataclass(frozen=True)
class DomainModel:
    """A bare domain packaged with the metadata the integrator expects.

    Used for sub-models that are not one of the two particle models, for
    instance the bond-bound triangle of the chain model.
    """

    domain: Domain
    names: Sequence[str]
    alpha: float = float("inf")
    beta0: float | None = None
    ledger_scales: Sequence[float] | None = None
    name: str = "domain"

    @property
    def dim(self):
        return self.domain.dim

    def coordinate_names(self):
        return list(self.names)

    def reported_scales(self):
        if self.ledger_scales is None:
            return np.ones(len(self.domain))
        return np.asarray(self.ledger_scales, dtype=float)


def half_space(cid: str, normal, offset: float) -> Constraint:
    """Constraint ``normal . x - offset >= 0`` (``normal`` need not be unit)."""
    a = np.asarray(normal, dtype=float)

    def func(x):
        return np.asarray(x, dtype=float) @ a - offset

    def grad(x):
        return a.copy()

    return Constraint(cid, func, grad)
