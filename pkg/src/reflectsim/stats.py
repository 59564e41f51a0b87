"""Ground-truth samplers and statistical tests for stationary and reversible laws."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np
from scipy.special import kolmogi

from .domain import Domain
from .noise import _generator

MIN_ACCEPTANCE = 1e-6
MIN_SAMPLES = 100


@dataclass
class GibbsSpec:
    """Unnormalized density ``exp(-energy(x)) 1_D(x)`` restricted to a box window.

    ``energy_lower_bound`` must bound ``energy`` from below on the window; it
    sets the rejection envelope.
    """

    domain: Domain
    low: np.ndarray
    high: np.ndarray
    energy: Callable[[np.ndarray], np.ndarray] | None = None
    energy_lower_bound: float = 0.0

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=float)
        self.high = np.asarray(self.high, dtype=float)
        if self.low.shape != (self.domain.dim,) or np.any(self.high <= self.low):
            raise ValueError("window must be a nondegenerate box of the domain dimension")

    @classmethod
    def for_model(cls, model, window_low, window_high, phi=None):
        """Window for a particle model: the box for positions, exact ranges for
        radii / bond bounds."""
        p = model.params
        low = np.empty(model.dim)
        high = np.empty(model.dim)
        if model.name == "globules":
            for i in range(p.n):
                low[model.center_slice(i)] = window_low
                high[model.center_slice(i)] = window_high
                low[model.radius_index(i)] = p.r_minus
                high[model.radius_index(i)] = p.r_plus
        else:
            low[: p.d * p.n] = np.resize(np.asarray(window_low, float), p.d * p.n)
            high[: p.d * p.n] = np.resize(np.asarray(window_high, float), p.d * p.n)
            low[model.lo_index:] = p.r_minus
            high[model.lo_index:] = p.r_plus
        energy = None
        bound = 0.0
        if phi is not None and phi.name != "zero":
            energy = lambda x: model.energy(phi, x)  # noqa: E731
            bound = phi.lower_bound * p.n * (p.n - 1) / 2
        return cls(model.domain, low, high, energy, bound)


@dataclass
class TestReport:
    statistic: str
    value: float
    threshold: float
    passed: bool
    sample_sizes: list[int]
    level: float | None = None

    __test__ = False  # not a pytest class

    def to_dict(self):
        return asdict(self)


def rejection_sample(spec: GibbsSpec, count: int, seed: int, batch: int | None = None):
    """I.i.d. samples from the Gibbs law restricted to the window.

    Membership uses the exact inequalities ``g_k(x) >= 0``. Returns the
    samples and the acceptance rate.
    """
    rng = _generator(seed, 7)
    batch = batch or max(1000, 4 * count)
    out = []
    accepted = proposed = 0
    while accepted < count:
        x = rng.uniform(spec.low, spec.high, size=(batch, spec.domain.dim))
        keep = spec.domain.contains(x, tol=0.0)
        if spec.energy is not None:
            u = rng.uniform(size=batch)
            keep &= u < np.exp(-(spec.energy(x) - spec.energy_lower_bound))
        proposed += batch
        accepted += int(keep.sum())
        out.append(x[keep])
        if proposed >= 10**7 and accepted / proposed < MIN_ACCEPTANCE:
            raise RuntimeError(
                f"acceptance rate {accepted / proposed:.2e} below {MIN_ACCEPTANCE}; "
                "window and potential do not match"
            )
    samples = np.concatenate(out)[:count]
    return samples, accepted / proposed


def ks_distance(a, b) -> float:
    """Kolmogorov-Smirnov statistic of ``a`` against a sample ``b`` or a CDF callable ``b``."""
    a = np.sort(np.asarray(a, dtype=float))
    n = a.size
    if n < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples")
    if callable(b):
        cdf = np.asarray(b(a), dtype=float)
        ranks = np.arange(1, n + 1) / n
        return float(max(np.max(ranks - cdf), np.max(cdf - (ranks - 1.0 / n))))
    b = np.sort(np.asarray(b, dtype=float))
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / n
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_critical(level: float, n: int, m: int | None = None) -> float:
    """Asymptotic KS critical value at significance ``level`` (one- or two-sample)."""
    c = kolmogi(level)
    eff = n if m is None else n * m / (n + m)
    return float(c / math.sqrt(eff))


def sup_abs_bm_cdf(x: float, terms: int = 50) -> float:
    """``P(sup_{t<=1} |W_t| < x)`` for standard Brownian motion."""
    if x <= 0:
        return 0.0
    k = np.arange(terms)
    s = np.sum((-1.0) ** k / (2 * k + 1) * np.exp(-((2 * k + 1) ** 2) * math.pi**2 / (8 * x * x)))
    return float(4 / math.pi * s)


def symmetry_critical(level: float, n: int) -> float:
    """Critical value of ``sup_x |F_n(x) + F_n(-x) - 1|`` for a symmetric law.

    Under symmetry ``sqrt(n)`` times the statistic converges to the supremum of
    ``|W|`` over ``[0, 1]``, not to the two-sample Kolmogorov law: the
    increments and their mirror images are the same data.
    """
    lo, hi = 0.1, 10.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if sup_abs_bm_cdf(mid) < 1 - level:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi) / math.sqrt(n)


def reversibility_test(values, lag: int, stride: int | None = None, level: float = 0.01) -> TestReport:
    """Pairwise exchangeability of ``(f_t, f_{t+lag})`` for a scalar series.

    The antisymmetric functional ``f_{t+lag} - f_t`` must be symmetric about 0
    when the pair law is exchangeable; the statistic is the KS distance between
    the increments and their negatives. Pairs start every ``stride`` samples
    (default ``lag``), which should exceed the decorrelation time.

    Time-reversibility of the whole path implies this, not conversely.
    """
    values = np.asarray(values, dtype=float)
    stride = stride or lag
    starts = np.arange(0, values.size - lag, stride)
    if starts.size < MIN_SAMPLES:
        raise ValueError("insufficient samples for the reversibility test")
    inc = values[starts + lag] - values[starts]
    stat = ks_distance(inc, -inc)
    threshold = symmetry_critical(level, inc.size)
    return TestReport("pair-exchangeability-ks", stat, threshold, bool(stat <= threshold), [int(inc.size)], level)


def stationarity_test(samples, oracle, level: float = 0.001) -> TestReport:
    """KS test of trajectory samples against oracle samples or an exact CDF."""
    samples = np.asarray(samples, dtype=float)
    stat = ks_distance(samples, oracle)
    if callable(oracle):
        threshold = ks_critical(level, samples.size)
        sizes = [int(samples.size)]
    else:
        oracle = np.asarray(oracle)
        threshold = ks_critical(level, samples.size, oracle.size)
        sizes = [int(samples.size), int(oracle.size)]
    return TestReport("ks", stat, threshold, bool(stat <= threshold), sizes, level)


def uniform_cdf(a: float, b: float):
    return lambda x: np.clip((np.asarray(x) - a) / (b - a), 0.0, 1.0)


def triangle_rosenblatt(lo, hi, r_minus, r_plus):
    """Map uniform samples on ``r_minus <= lo <= hi <= r_plus`` to U(0,1)^2."""
    lo, hi = np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)
    w = r_plus - r_minus
    u1 = 1.0 - ((r_plus - lo) / w) ** 2
    # the top corner lo = hi = r_plus has probability zero; map it to 0
    span = r_plus - lo
    u2 = np.divide(hi - lo, span, out=np.zeros_like(span), where=span > 0)
    return u1, u2


def triangle_stationarity(lo, hi, r_minus, r_plus, oracle=None, level: float = 0.001) -> list[TestReport]:
    """KS checks of the (lo, hi) law against the uniform law on the triangle.

    Both Rosenblatt coordinates are tested against U(0,1); with ``oracle``
    samples (shape ``(N, 2)``) both marginals are also compared two-sample.
    """
    u1, u2 = triangle_rosenblatt(lo, hi, r_minus, r_plus)
    unif = uniform_cdf(0.0, 1.0)
    reports = [stationarity_test(u1, unif, level), stationarity_test(u2, unif, level)]
    reports[0].statistic, reports[1].statistic = "ks-rosenblatt-lo", "ks-rosenblatt-hi|lo"
    if oracle is not None:
        for k, name in enumerate(["ks-marginal-lo", "ks-marginal-hi"]):
            rep = stationarity_test([lo, hi][k], oracle[:, k], level)
            rep.statistic = name
            reports.append(rep)
    return reports


def thin(values, stride: int, burn_in: int = 0):
    return np.asarray(values)[burn_in::stride]
