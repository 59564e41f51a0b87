"""Globules: hard spheres in R^d whose radii diffuse inside [r_minus, r_plus].

Configurations are flat vectors laid out as ``(x_1, r_1, ..., x_n, r_n)``
with ``x_i`` the centre (``d`` entries) and ``r_i`` the radius of globule i.
Constraint ids use 1-based globule indices: ``contact_i_j`` (i < j),
``rplus_i`` and ``rminus_i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .domain import Constraint, Domain, DomainError, active_set


class Constants(NamedTuple):
    alpha: float
    beta: float
    delta: float
    beta0: float


@dataclass(frozen=True)
class GlobuleParams:
    n: int
    d: int
    r_minus: float
    r_plus: float

    def __post_init__(self):
        # n = 1 is accepted: it is the isolated-globule sub-model used for
        # stationarity checks (no contact constraint at all).
        if self.n < 1 or self.d < 1:
            raise ValueError("need n >= 1 and d >= 1")
        if not 0 < self.r_minus < self.r_plus:
            raise ValueError("need 0 < r_minus < r_plus")

    @property
    def m(self):
        return (self.d + 1) * self.n


@dataclass(frozen=True)
class PairPotential:
    """Even pair potential ``phi`` on R^d with its gradient.

    Both callables are vectorized over leading axes of ``(..., d)`` arrays.
    ``grad_bound`` is a declared bound on ``|grad phi|``.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    grad: Callable[[np.ndarray], np.ndarray]
    grad_bound: float
    name: str = "custom"
    lower_bound: float = 0.0

    @classmethod
    def zero(cls):
        return cls(
            phi=lambda r: np.zeros(np.shape(r)[:-1]),
            grad=lambda r: np.zeros(np.shape(r)),
            grad_bound=0.0,
            name="zero",
        )

    @classmethod
    def gaussian(cls, strength, width):
        """``phi(r) = strength * exp(-|r|^2 / (2 width^2))``."""
        s, w2 = float(strength), float(width) ** 2

        def phi(r):
            return s * np.exp(-np.sum(np.square(r), axis=-1) / (2 * w2))

        def grad(r):
            r = np.asarray(r, dtype=float)
            return (-r / w2) * phi(r)[..., None]

        return cls(
            phi=phi,
            grad=grad,
            grad_bound=abs(s) * math.exp(-0.5) / math.sqrt(w2),
            name="gaussian",
            lower_bound=min(0.0, s),
        )


class GlobuleModel:
    """The set of allowed globule configurations and its geometry."""

    name = "globules"

    def __init__(self, params: GlobuleParams, activity_tol: float | None = None):
        self.params = params
        self.activity_tol = activity_tol if activity_tol is not None else 1e-9 * params.r_plus

    # layout

    @property
    def dim(self):
        return self.params.m

    def center_slice(self, i):
        b = (self.params.d + 1) * i
        return slice(b, b + self.params.d)

    def radius_index(self, i):
        return (self.params.d + 1) * i + self.params.d

    def centers(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        return x.reshape(x.shape[:-1] + (p.n, p.d + 1))[..., :p.d]

    def radii(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        return x.reshape(x.shape[:-1] + (p.n, p.d + 1))[..., p.d]

    def pack(self, centers, radii):
        centers = np.asarray(centers, dtype=float)
        radii = np.asarray(radii, dtype=float)
        return np.concatenate([centers, radii[..., None]], axis=-1).reshape(
            centers.shape[:-2] + (self.dim,)
        )

    def coordinate_names(self):
        axes = "xyzw"
        names = []
        for i in range(1, self.params.n + 1):
            for a in range(self.params.d):
                label = axes[a] if self.params.d <= len(axes) else str(a + 1)
                names.append(f"{label}{i}")
            names.append(f"r{i}")
        return names

    def pairs(self):
        n = self.params.n
        return [(i, j) for i in range(n) for j in range(i + 1, n)]

    # constraints

    def _contact(self, i, j):
        ci, cj = self.center_slice(i), self.center_slice(j)
        ri, rj = self.radius_index(i), self.radius_index(j)

        def func(x):
            x = np.asarray(x, dtype=float)
            return np.linalg.norm(x[..., ci] - x[..., cj], axis=-1) - x[..., ri] - x[..., rj]

        def grad(x):
            diff = x[ci] - x[cj]
            dist = np.linalg.norm(diff)
            if dist == 0.0:
                raise DomainError(f"coincident centres {i + 1} and {j + 1}")
            g = np.zeros(self.dim)
            g[ci] = diff / dist
            g[cj] = -diff / dist
            g[ri] = g[rj] = -1.0
            return g

        return Constraint(f"contact_{i + 1}_{j + 1}", func, grad)

    def _radius(self, i, upper):
        k = self.radius_index(i)
        p = self.params
        e = np.zeros(self.dim)
        e[k] = -1.0 if upper else 1.0

        if upper:
            def func(x):
                return p.r_plus - np.asarray(x, dtype=float)[..., k]
        else:
            def func(x):
                return np.asarray(x, dtype=float)[..., k] - p.r_minus

        return Constraint(f"{'rplus' if upper else 'rminus'}_{i + 1}", func, lambda x: e.copy())

    @cached_property
    def domain(self) -> Domain:
        cons = [self._contact(i, j) for i, j in self.pairs()]
        cons += [self._radius(i, True) for i in range(self.params.n)]
        cons += [self._radius(i, False) for i in range(self.params.n)]
        return Domain(cons, self.activity_tol, self.dim)

    def build_domain(self) -> Domain:
        return self.domain

    # closed-form normals

    def _on_contact(self, i, j, x):
        s = self.radii(x)[i] + self.radii(x)[j]
        dist = np.linalg.norm(self.centers(x)[i] - self.centers(x)[j])
        if abs(dist - s) > self.activity_tol:
            raise DomainError(f"globules {i + 1} and {j + 1} are not in contact")
        return s

    def normal_contact(self, i, j, x):
        """Inward unit normal of the contact constraint between globules i and j (0-based)."""
        x = np.asarray(x, dtype=float)
        s = self._on_contact(i, j, x)
        diff = x[self.center_slice(i)] - x[self.center_slice(j)]
        n = np.zeros(self.dim)
        n[self.center_slice(i)] = diff / (2 * s)
        n[self.center_slice(j)] = -diff / (2 * s)
        n[self.radius_index(i)] = n[self.radius_index(j)] = -0.5
        return n

    def normal_radius_plus(self, i):
        n = np.zeros(self.dim)
        n[self.radius_index(i)] = -1.0
        return n

    def normal_radius_minus(self, i):
        n = np.zeros(self.dim)
        n[self.radius_index(i)] = 1.0
        return n

    def normal(self, cid, x):
        kind, *idx = cid.split("_")
        idx = [int(k) - 1 for k in idx]
        if kind == "contact":
            return self.normal_contact(idx[0], idx[1], x)
        if kind == "rplus":
            return self.normal_radius_plus(idx[0])
        return self.normal_radius_minus(idx[0])

    # compatibility vector

    def clusters(self, x):
        """Union-find labels of contact clusters (contacts active within the band)."""
        n = self.params.n
        parent = list(range(n))

        def find(a):
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        c, r = self.centers(x), self.radii(x)
        for i, j in self.pairs():
            if abs(np.linalg.norm(c[i] - c[j]) - r[i] - r[j]) <= self.activity_tol:
                parent[find(j)] = find(i)
        return np.array([find(i) for i in range(n)])

    def compatibility_raw(self, x):
        """Unnormalized compatibility vector v built from contact clusters."""
        x = np.asarray(x, dtype=float)
        p = self.params
        c, r = self.centers(x), self.radii(x)
        labels = self.clusters(x)
        v_centers = np.empty_like(c)
        for lab in np.unique(labels):
            members = labels == lab
            v_centers[members] = c[members] - c[members].mean(axis=0)
        v_radii = p.r_minus / (p.r_plus - p.r_minus) * ((p.r_plus + p.r_minus) / 2 - r)
        return self.pack(v_centers, v_radii)

    def compatibility_vector(self, x):
        if not active_set(self.domain, x):
            raise DomainError("compatibility vector is only defined on the boundary")
        v = self.compatibility_raw(x)
        return v / np.linalg.norm(v)

    # boundary seeding (used by the geometry verifier)

    def boundary_strata(self):
        """Templates of active sets that boundary sampling must cover."""
        strata = [("contact",), ("rplus",), ("rminus",)]
        if self.params.n == 1:
            return [("rplus",), ("rminus",)]
        strata += [("contact", "rplus"), ("contact", "rminus"), ("rplus", "rplus"), ("rplus", "rminus")]
        if self.params.n >= 3:
            strata += [("contact", "contact"), ("triangle",)]
        return strata

    def stratum_ids(self, template, rng):
        """Concrete constraint ids for a stratum template."""
        n = self.params.n
        perm = [int(k) for k in rng.permutation(n)]
        a, b = sorted(perm[:2]) if n > 1 else (perm[0], perm[0])

        def contact(i, j):
            i, j = sorted((i, j))
            return f"contact_{i + 1}_{j + 1}"

        if template == ("triangle",):
            i, j, k = perm[:3]
            return [contact(i, j), contact(j, k), contact(i, k)]
        if template == ("contact", "contact"):
            i, j, k = perm[:3]
            return [contact(i, j), contact(j, k)]
        ids = []
        for kind in template:
            if kind == "contact":
                ids.append(contact(a, b))
            elif kind == "rplus":
                ids.append(f"rplus_{(a if 'rplus' not in ' '.join(ids) else b) + 1}")
            else:
                ids.append(f"rminus_{(b if 'rplus' in ' '.join(ids) and template[0] != 'contact' else a) + 1}")
        return ids

    def seed_configuration(self, rng, ids):
        """A feasible configuration with the constraints ``ids`` nearly active."""
        p = self.params
        span = p.r_plus - p.r_minus
        radii = rng.uniform(p.r_minus, p.r_plus, p.n)
        edges = []
        for cid in ids:
            kind, *idx = cid.split("_")
            idx = [int(k) - 1 for k in idx]
            if kind == "rplus":
                radii[idx[0]] = p.r_plus - rng.uniform(0, 0.05) * span
            elif kind == "rminus":
                radii[idx[0]] = p.r_minus + rng.uniform(0, 0.05) * span
            else:
                edges.append(tuple(idx))
        centers = np.full((p.n, p.d), np.nan)
        box = 4.0 * p.n * p.r_plus
        placed = []
        for i, j in edges:
            for a, b in ((i, j), (j, i)):
                if a in placed and b not in placed:
                    break
            else:
                a, b = (i, j)
                if a not in placed:
                    centers[a] = rng.uniform(0, box, p.d)
                    placed.append(a)
                if b in placed:
                    continue
            u = rng.standard_normal(p.d)
            u /= np.linalg.norm(u)
            gap = rng.uniform(0, 0.05) * p.r_minus
            centers[b] = centers[a] + u * (radii[a] + radii[b] + gap)
            placed.append(b)
        for i in range(p.n):
            if i in placed:
                continue
            for _ in range(1000):
                c = rng.uniform(0, box, p.d)
                if all(np.linalg.norm(c - centers[k]) > radii[i] + radii[k] + 0.1 * p.r_minus for k in placed):
                    break
            centers[i] = c
            placed.append(i)
        return self.pack(centers, radii)

    # constants

    def constants(self) -> Constants:
        return globule_constants(self.params)

    @property
    def alpha(self):
        return self.constants().alpha

    @property
    def beta0(self):
        return self.constants().beta0

    def delta_candidates(self):
        return globule_delta_candidates(self.params)

    def reported_scales(self):
        # Reported contact local time is half the normalized-normal coefficient.
        return np.array([0.5 if cid.startswith("contact") else 1.0 for cid in self.domain.ids])

    # dynamics

    def gradient_drift(self, phi: PairPotential, x):
        """Drift ``b_i = -1/2 sum_j grad phi(x_i - x_j)`` on centres, zero on radii."""
        c = self.centers(x)
        diff = c[:, None, :] - c[None, :, :]
        g = np.asarray(phi.grad(diff), dtype=float)
        idx = np.arange(self.params.n)
        g[idx, idx] = 0.0
        b_centers = -0.5 * g.sum(axis=1)
        return self.pack(b_centers, np.zeros(self.params.n))

    def energy(self, phi: PairPotential, x):
        """``sum_{i<j} phi(x_i - x_j)``; vectorized over leading axes."""
        c = self.centers(x)
        total = np.zeros(c.shape[:-2])
        for i, j in self.pairs():
            total = total + phi.phi(c[..., i, :] - c[..., j, :])
        return total

    def diffusive_time(self, sigma_radius=1.0):
        """Crossing time of the radius interval, ``(r_plus - r_minus)^2 / sigma^2``."""
        return (self.params.r_plus - self.params.r_minus) ** 2 / sigma_radius**2

    def default_initial(self, spacing=None):
        """Globules on a square-ish grid, radii at mid-range, no contacts."""
        p = self.params
        spacing = spacing if spacing is not None else 3.0 * p.r_plus
        side = math.ceil(p.n ** (1.0 / p.d))
        centers = np.zeros((p.n, p.d))
        for i in range(p.n):
            k = i
            for a in range(p.d):
                centers[i, a] = (k % side) * spacing
                k //= side
        radii = np.full(p.n, 0.5 * (p.r_minus + p.r_plus))
        return self.pack(centers, radii)


def globule_constants(p: GlobuleParams) -> Constants:
    n, rm, rp = p.n, p.r_minus, p.r_plus
    alpha = rm**2 / (2 * rp * n * math.sqrt(n))
    beta = math.sqrt(1 - rm**2 / (2**6 * rp**2 * n**3))
    beta0 = rm / (4 * rp * n * math.sqrt(n))
    return Constants(alpha, beta, min(globule_delta_candidates(p).values()), beta0)


def globule_delta_candidates(p: GlobuleParams) -> dict[str, float]:
    """The two published forms of the UNC radius; they differ by sqrt(2)."""
    n, rm, rp = p.n, p.r_minus, p.r_plus
    return {
        "stated": rm**5 / (2**14 * rp**4 * n**6),
        "derived": rm**5 / (2**13 * math.sqrt(2) * rp**4 * n**6),
    }
