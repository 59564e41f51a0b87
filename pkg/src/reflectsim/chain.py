"""Linear molecules: chains of n particles whose bond lengths stay between two
diffusing bounds ``lo <= hi`` confined to ``[r_minus, r_plus]``.

Configurations are flat vectors ``(x_1, ..., x_n, lo, hi)``. Constraint ids
(1-based bond index i, bond i joins particles i and i+1): ``bondmin_i``,
``bondmax_i``, ``lower`` (lo >= r_minus), ``upper`` (hi <= r_plus) and
``equal`` (lo <= hi).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .domain import Constraint, Domain, DomainError, DomainModel, active_set, half_space
from .globules import Constants, PairPotential

SQRT2 = math.sqrt(2.0)
SQRT3 = math.sqrt(3.0)


@dataclass(frozen=True)
class ChainParams:
    n: int
    d: int
    r_minus: float
    r_plus: float

    def __post_init__(self):
        if self.n < 2 or self.d < 1:
            raise ValueError("need n >= 2 and d >= 1")
        if not 0 < self.r_minus < self.r_plus:
            raise ValueError("need 0 < r_minus < r_plus")

    @property
    def m(self):
        return self.d * self.n + 2


class ChainModel:
    """The set of allowed chain configurations and its geometry."""

    name = "chain"

    def __init__(self, params: ChainParams, activity_tol: float | None = None):
        self.params = params
        self.activity_tol = activity_tol if activity_tol is not None else 1e-9 * params.r_plus

    @property
    def dim(self):
        return self.params.m

    @property
    def lo_index(self):
        return self.params.d * self.params.n

    @property
    def hi_index(self):
        return self.params.d * self.params.n + 1

    def position_slice(self, i):
        d = self.params.d
        return slice(d * i, d * (i + 1))

    def positions(self, x):
        x = np.asarray(x, dtype=float)
        p = self.params
        return x[..., : p.d * p.n].reshape(x.shape[:-1] + (p.n, p.d))

    def bounds(self, x):
        x = np.asarray(x, dtype=float)
        return x[..., self.lo_index], x[..., self.hi_index]

    def pack(self, positions, lo, hi):
        positions = np.asarray(positions, dtype=float)
        flat = positions.reshape(positions.shape[:-2] + (-1,))
        tail = np.stack(np.broadcast_arrays(np.asarray(lo, float), np.asarray(hi, float)), axis=-1)
        return np.concatenate([flat, tail], axis=-1)

    def coordinate_names(self):
        axes = "xyzw"
        names = []
        for i in range(1, self.params.n + 1):
            for a in range(self.params.d):
                label = axes[a] if self.params.d <= len(axes) else str(a + 1)
                names.append(f"{label}{i}")
        return names + ["lo", "hi"]

    def bond_lengths(self, x):
        pos = self.positions(x)
        return np.linalg.norm(pos[..., 1:, :] - pos[..., :-1, :], axis=-1)

    # constraints

    def _bond(self, i, upper):
        si, sj = self.position_slice(i), self.position_slice(i + 1)
        k = self.hi_index if upper else self.lo_index
        sign = -1.0 if upper else 1.0

        def func(x):
            x = np.asarray(x, dtype=float)
            return sign * (np.linalg.norm(x[..., si] - x[..., sj], axis=-1) - x[..., k])

        def grad(x):
            diff = x[si] - x[sj]
            dist = np.linalg.norm(diff)
            if dist == 0.0:
                raise DomainError(f"coincident particles {i + 1} and {i + 2}")
            g = np.zeros(self.dim)
            g[si] = sign * diff / dist
            g[sj] = -sign * diff / dist
            g[k] = -sign
            return g

        return Constraint(f"{'bondmax' if upper else 'bondmin'}_{i + 1}", func, grad)

    def _bound_constraints(self):
        p = self.params
        lo, hi = self.lo_index, self.hi_index
        e = np.eye(self.dim)
        return [
            half_space("lower", e[lo], p.r_minus),
            half_space("upper", -e[hi], -p.r_plus),
            half_space("equal", e[hi] - e[lo], 0.0),
        ]

    @cached_property
    def domain(self) -> Domain:
        n = self.params.n
        cons = [self._bond(i, False) for i in range(n - 1)]
        cons += [self._bond(i, True) for i in range(n - 1)]
        cons += self._bound_constraints()
        return Domain(cons, self.activity_tol, self.dim)

    def build_domain(self) -> Domain:
        return self.domain

    # closed-form normals

    def _bond_diff(self, i, x, target_index):
        x = np.asarray(x, dtype=float)
        diff = x[self.position_slice(i)] - x[self.position_slice(i + 1)]
        if abs(np.linalg.norm(diff) - x[target_index]) > self.activity_tol:
            raise DomainError(f"bond {i + 1} is not at that bound")
        return diff, x[target_index]

    def normal_bond_min(self, i, x):
        """Inward unit normal of ``|x_i - x_{i+1}| >= lo`` for 0-based bond i."""
        diff, lo = self._bond_diff(i, x, self.lo_index)
        n = np.zeros(self.dim)
        n[self.position_slice(i)] = diff / (lo * SQRT3)
        n[self.position_slice(i + 1)] = -diff / (lo * SQRT3)
        n[self.lo_index] = -1.0 / SQRT3
        return n

    def normal_bond_max(self, i, x):
        diff, hi = self._bond_diff(i, x, self.hi_index)
        n = np.zeros(self.dim)
        n[self.position_slice(i)] = -diff / (hi * SQRT3)
        n[self.position_slice(i + 1)] = diff / (hi * SQRT3)
        n[self.hi_index] = 1.0 / SQRT3
        return n

    def normal_lower(self):
        n = np.zeros(self.dim)
        n[self.lo_index] = 1.0
        return n

    def normal_upper(self):
        n = np.zeros(self.dim)
        n[self.hi_index] = -1.0
        return n

    def normal_equal(self):
        n = np.zeros(self.dim)
        n[self.lo_index] = -1.0 / SQRT2
        n[self.hi_index] = 1.0 / SQRT2
        return n

    def normal(self, cid, x):
        if cid == "lower":
            return self.normal_lower()
        if cid == "upper":
            return self.normal_upper()
        if cid == "equal":
            return self.normal_equal()
        kind, i = cid.split("_")
        if kind == "bondmin":
            return self.normal_bond_min(int(i) - 1, x)
        return self.normal_bond_max(int(i) - 1, x)

    # compatibility vector

    def compatibility_raw(self, x):
        """Unnormalized compatibility vector, built outward from the chain middle."""
        x = np.asarray(x, dtype=float)
        p = self.params
        eps = self.activity_tol
        pos = self.positions(x)
        lo, hi = self.bounds(x)
        mid = 0.5 * (lo + hi)
        equal = abs(hi - lo) <= eps
        top = equal and abs(p.r_plus - hi) <= eps
        lengths = self.bond_lengths(x)

        def flipped(i):
            # Sign rule for v_i - v_{i+1}. Bonds sitting at a bound follow the
            # bound they touch; free bonds compare with the mid bound length.
            if top:
                return True
            if equal:
                return False
            if abs(lengths[i] - lo) <= eps:
                return False
            if abs(lengths[i] - hi) <= eps:
                return True
            return lengths[i] > mid

        def bond_step(i):
            step = pos[i] - pos[i + 1]
            return -step if flipped(i) else step

        n = p.n
        v = np.zeros_like(pos)
        if n % 2:
            c = (n - 1) // 2
            v[c] = 0.0
            upper_start = c
        else:
            c = n // 2 - 1
            centre = 0.5 * (pos[c] + pos[c + 1])
            if flipped(c):
                v[c], v[c + 1] = pos[c + 1] - centre, pos[c] - centre
            else:
                v[c], v[c + 1] = pos[c] - centre, pos[c + 1] - centre
            upper_start = c + 1
        for i in range(c - 1, -1, -1):
            v[i] = v[i + 1] + bond_step(i)
        for i in range(upper_start, n - 1):
            v[i + 1] = v[i] - bond_step(i)

        if top:
            v_lo, v_hi = -1.5 * p.r_plus, -0.5 * p.r_plus
        elif equal:
            v_lo, v_hi = 0.5 * p.r_minus, 1.5 * p.r_plus
        else:
            v_lo, v_hi = 0.5 * p.r_minus, -0.5 * p.r_minus
        return self.pack(v, v_lo, v_hi)

    def compatibility_vector(self, x):
        if not active_set(self.domain, x):
            raise DomainError("compatibility vector is only defined on the boundary")
        v = self.compatibility_raw(x)
        return v / np.linalg.norm(v)

    # boundary seeding (used by the geometry verifier)

    def boundary_strata(self):
        strata = [("bondmin",), ("bondmax",), ("lower",), ("upper",), ("equal",),
                  ("bondmin", "lower"), ("bondmax", "upper"), ("bondmin", "bondmax"),
                  ("lower", "upper"), ("equal", "lower"), ("equal", "upper")]
        if self.params.n >= 3:
            strata += [("bondmin", "bondmin"), ("bondmax", "bondmax")]
        return strata

    def stratum_ids(self, template, rng):
        bonds = [int(k) for k in rng.permutation(self.params.n - 1)]
        ids = []
        used = 0
        for kind in template:
            if kind in ("bondmin", "bondmax"):
                ids.append(f"{kind}_{bonds[used % len(bonds)] + 1}")
                used += 1
            else:
                ids.append(kind)
        return ids

    def seed_configuration(self, rng, ids):
        p = self.params
        span = p.r_plus - p.r_minus
        near = lambda: rng.uniform(0, 0.05) * span  # noqa: E731
        if "equal" in ids:
            if "upper" in ids:
                hi = p.r_plus
            elif "lower" in ids:
                hi = p.r_minus
            else:
                hi = rng.uniform(p.r_minus, p.r_plus)
            lo = hi
        else:
            lo = p.r_minus + near() if "lower" in ids else rng.uniform(p.r_minus, p.r_minus + 0.6 * span)
            hi = p.r_plus - near() if "upper" in ids else rng.uniform(lo + 0.2 * span, p.r_plus)
            hi = max(hi, lo + 0.1 * span)
        lengths = rng.uniform(lo, hi, p.n - 1)
        for cid in ids:
            if cid.startswith("bondmin"):
                lengths[int(cid.split("_")[1]) - 1] = lo + 0.1 * near() if hi > lo else lo
            elif cid.startswith("bondmax"):
                lengths[int(cid.split("_")[1]) - 1] = hi - 0.1 * near() if hi > lo else hi
        if "equal" in ids:
            lengths[:] = lo
        pos = np.zeros((p.n, p.d))
        pos[0] = rng.uniform(-p.r_plus, p.r_plus, p.d)
        for i in range(p.n - 1):
            u = rng.standard_normal(p.d)
            pos[i + 1] = pos[i] + lengths[i] * u / np.linalg.norm(u)
        return self.pack(pos, lo, hi)

    # constants

    def constants(self) -> Constants:
        return chain_constants(self.params)

    @property
    def alpha(self):
        return self.constants().alpha

    @property
    def beta0(self):
        return self.constants().beta0

    def delta_candidates(self):
        return chain_delta_candidates(self.params)

    def reported_scales(self):
        # Reported bond local times are the normalized-normal coefficients
        # divided by sqrt(3); the lo = hi local time by sqrt(2).
        scales = []
        for cid in self.domain.ids:
            if cid.startswith("bond"):
                scales.append(1.0 / SQRT3)
            elif cid == "equal":
                scales.append(1.0 / SQRT2)
            else:
                scales.append(1.0)
        return np.array(scales)

    # dynamics

    def gradient_drift(self, phi: PairPotential, x):
        pos = self.positions(x)
        diff = pos[:, None, :] - pos[None, :, :]
        g = np.asarray(phi.grad(diff), dtype=float)
        idx = np.arange(self.params.n)
        g[idx, idx] = 0.0
        return self.pack(-0.5 * g.sum(axis=1), 0.0, 0.0)

    def energy(self, phi: PairPotential, x):
        pos = self.positions(x)
        total = np.zeros(pos.shape[:-2])
        n = self.params.n
        for i in range(n):
            for j in range(i + 1, n):
                total = total + phi.phi(pos[..., i, :] - pos[..., j, :])
        return total

    def diffusive_time(self, sigma_bound=1.0):
        return (self.params.r_plus - self.params.r_minus) ** 2 / sigma_bound**2

    def default_initial(self):
        """Straight chain along the first axis with every bond at mid length."""
        p = self.params
        lo, hi = p.r_minus + 0.25 * (p.r_plus - p.r_minus), p.r_plus - 0.25 * (p.r_plus - p.r_minus)
        pos = np.zeros((p.n, p.d))
        pos[:, 0] = np.arange(p.n) * 0.5 * (lo + hi)
        return self.pack(pos, lo, hi)

    def bounds_submodel(self) -> DomainModel:
        """The (lo, hi) triangle ``r_minus <= lo <= hi <= r_plus`` on its own.

        This is what the bound coordinates see when the particles do not move
        and the bond constraints are dropped.
        """
        p = self.params
        e = np.eye(2)
        cons = [
            half_space("lower", e[0], p.r_minus),
            half_space("upper", -e[1], -p.r_plus),
            half_space("equal", e[1] - e[0], 0.0),
        ]
        dom = Domain(cons, self.activity_tol, 2)
        return DomainModel(dom, ["lo", "hi"], ledger_scales=[1.0, 1.0, 1.0 / SQRT2], name="chain-bounds")


def chain_constants(p: ChainParams) -> Constants:
    n, rm, rp = p.n, p.r_minus, p.r_plus
    alpha = rm**2 / (2 * rp * n * math.sqrt(2 * n))
    beta = math.sqrt(1 - rm**2 / (24 * rp**2 * n**3))
    beta0 = rm / (rp * n * math.sqrt(6 * n))
    return Constants(alpha, beta, min(chain_delta_candidates(p).values()), beta0)


def chain_delta_candidates(p: ChainParams) -> dict[str, float]:
    """Stated and derived UNC radius; the derived one is smaller by 9/8."""
    n, rm, rp = p.n, p.r_minus, p.r_plus
    return {
        "stated": rm**5 * SQRT3 / (2**12 * rp**4 * n**6),
        "derived": rm**5 / (2**9 * 3 * SQRT3 * rp**4 * n**6),
    }
