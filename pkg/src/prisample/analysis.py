"""Closed-form variances, an exact small-n oracle, and the exact-k construction.

The oracle computes moments of a priority-sampling weight estimate without
running the sampler. For item ``i`` the estimate depends on the other items
only through ``T``, the k-th highest of their priorities: ``i`` is kept with
probability ``min(1, w_i/T)`` and then estimated as ``max(w_i, T)``. The
distribution of ``T`` is written as a sum over which item ``j`` attains it,
integrating over ``alpha_j`` with a Poisson-binomial count of the items
above it. Each term is a one-dimensional integral that scipy's adaptive
quadrature evaluates with explicit breakpoints at every kink.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import integrate

from . import montecarlo as mc
from .model import SchemeTag, SeededGenerator
from .samplers import solve_threshold

__all__ = [
    "ConjectureRecord",
    "ExactKEvent",
    "InclusionScheme",
    "OracleResult",
    "SchemeTag",
    "conjecture_compare",
    "exact_oracle",
    "exactify",
    "marginals",
    "fixed_thr_item_variance",
    "pair_inversion_prob",
    "sample_exact_k",
    "thr_total_variance",
    "unit_variance",
]

ORACLE_MAX_N = 4


def unit_variance(scheme: SchemeTag, n: int, k: int) -> float:
    """Variance of one item's weight estimate when all n weights are 1.

    Priority sampling with k = 1 has infinite variance and returns ``math.inf``.
    """
    if not (1 <= k <= n):
        raise ValueError(f"need 1 <= k <= n, got n={n}, k={k}")
    if scheme in (SchemeTag.UR, SchemeTag.THR):
        return (n - k) / k
    if scheme is SchemeTag.WR:
        miss = (1.0 - 1.0 / n) ** k
        return miss / (1.0 - miss)
    if scheme is SchemeTag.WR_COUNT:
        return (n - 1) / k
    if scheme is SchemeTag.PRI:
        if k == 1:
            return math.inf if n > 1 else 0.0
        return (n - k) / (k - 1)
    raise ValueError(f"unknown scheme {scheme!r}")


def fixed_thr_item_variance(w: float, tau: float) -> float:
    """v(w, tau) = w * max(0, tau - w)."""
    if w < 0 or tau < 0:
        raise ValueError("weights and thresholds must be nonnegative")
    return w * max(0.0, tau - w)


def thr_total_variance(weights, k: int) -> float:
    tau = solve_threshold(weights, k)
    return math.fsum(fixed_thr_item_variance(float(w), tau) for w in weights)


def pair_inversion_prob(w_small: float, w_large: float) -> float:
    """Pr[the lighter item outranks the heavier one] = w_small / (2 w_large)."""
    if not (0 < w_small <= w_large):
        raise ValueError("need 0 < w_small <= w_large")
    return w_small / (2.0 * w_large)


# --------------------------------------------------------------------------
# exact oracle


@dataclass(frozen=True)
class OracleResult:
    value: float
    stderr: float  # 0 for quadrature (error bound is below 1e-9 relative)
    method: str  # "quadrature" or "monte_carlo"
    trials: int = 0


def _pb_pmf(probs: Sequence[float], m: int) -> float:
    """Pr[exactly m successes] among independent Bernoulli(probs)."""
    dist = [1.0]
    for p in probs:
        nxt = [0.0] * (len(dist) + 1)
        for c, mass in enumerate(dist):
            nxt[c] += mass * (1.0 - p)
            nxt[c + 1] += mass * p
        dist = nxt
    return dist[m] if 0 <= m < len(dist) else 0.0


def _order_stat_expectation(others: Sequence[float], m: int, h: Callable[[float], float],
                            kinks: Sequence[float]) -> float:
    """E[h(T)], T the m-th highest priority among ``others`` (T = 0 if there are fewer)."""
    if len(others) < m:
        return h(0.0)
    total = 0.0
    for j, wj in enumerate(others):
        rest = list(others[:j]) + list(others[j + 1:])

        def integrand(a: float) -> float:
            probs = [min(1.0, wh * a / wj) for wh in rest]
            return _pb_pmf(probs, m - 1) * h(wj / a)

        pts = {wj / wh for wh in rest if wh > wj} | {wj / x for x in kinks if x > wj}
        pts = sorted(p for p in pts if 0.0 < p < 1.0)
        val, _ = integrate.quad(integrand, 0.0, 1.0, points=pts or None, limit=400,
                                epsabs=1e-14, epsrel=1e-11)
        total += val
    return total


def _kept_then(w: float, g: Callable[[float], float]) -> Callable[[float], float]:
    """t -> E[g(estimate)] for an item of weight w facing threshold t."""

    def h(t: float) -> float:
        if t <= w:
            return g(w)
        p = w / t
        return p * g(t) + (1.0 - p) * g(0.0)

    return h


def _quadrature(w: list[float], k: int, i: int, statistic: str, j: Optional[int]) -> float:
    n = len(w)
    wi = w[i]
    if statistic in ("mean", "second_moment", "variance"):
        others = w[:i] + w[i + 1:]
        if statistic == "mean":
            return _order_stat_expectation(others, k, _kept_then(wi, lambda x: x), [wi])
        if k == 1 and n > 1:
            return math.inf
        m2 = _order_stat_expectation(others, k, _kept_then(wi, lambda x: x * x), [wi])
        return m2 if statistic == "second_moment" else m2 - wi * wi
    # both i and j are kept iff each beats the (k-1)-th highest of the rest,
    # and that order statistic is then the threshold
    if j is None or j == i:
        raise ValueError("cross moments need a distinct second item")
    wj = w[j]
    if n <= k:
        cross = wi * wj
    elif k == 1:
        cross = 0.0
    else:
        rest = [x for idx, x in enumerate(w) if idx not in (i, j)]

        def h(t: float) -> float:
            return _kept_then(wi, lambda x: x)(t) * _kept_then(wj, lambda x: x)(t)

        cross = _order_stat_expectation(rest, k - 1, h, [wi, wj])
    return cross if statistic == "cross_moment" else cross - wi * wj


def _monte_carlo(w: np.ndarray, k: int, i: int, statistic: str, j: Optional[int],
                 trials: int, seed: int) -> tuple[float, float]:
    gen = SeededGenerator(seed)
    acc = mc.RunningMoments()
    n = len(w)
    for t, child in mc.chunks(trials, n, gen):
        est = mc.priority_block(w, k, child.alphas((t, n))).est
        if statistic == "mean":
            x = est[:, i]
        elif statistic in ("second_moment", "variance"):
            x = est[:, i] ** 2
        else:
            x = est[:, i] * est[:, j]
        acc.update(x)
    value = float(acc.mean)
    if statistic == "variance":
        value -= w[i] ** 2
    elif statistic == "covariance":
        value -= w[i] * w[j]
    return value, float(acc.stderr)


def exact_oracle(weights, k: int, target_item: int, statistic: str = "mean", *,
                 other_item: Optional[int] = None, method: str = "quadrature",
                 trials: int = 10_000_000, seed: int = 0) -> OracleResult:
    """Brute-force moments of priority-sampling estimates on tiny instances.

    ``statistic`` is one of ``mean``, ``second_moment``, ``variance``,
    ``cross_moment`` or ``covariance`` (the last two need ``other_item``).
    ``method="quadrature"`` is deterministic; ``method="monte_carlo"``
    samples the alpha hypercube directly and reports a standard error.
    """
    w = [float(x) for x in weights]
    n = len(w)
    if n > ORACLE_MAX_N:
        raise ValueError(f"oracle is brute force and limited to n <= {ORACLE_MAX_N}, got n={n}")
    if any(x <= 0 for x in w):
        raise ValueError("oracle needs strictly positive weights")
    if k < 1:
        raise ValueError("k must be at least 1")
    if statistic not in ("mean", "second_moment", "variance", "cross_moment", "covariance"):
        raise ValueError(f"unknown statistic {statistic!r}")
    if statistic in ("cross_moment", "covariance") and (other_item is None or other_item == target_item):
        raise ValueError("cross moments need a distinct other_item")
    if method == "quadrature":
        return OracleResult(_quadrature(w, k, target_item, statistic, other_item), 0.0, method)
    if method == "monte_carlo":
        value, se = _monte_carlo(np.array(w), k, target_item, statistic, other_item, trials, seed)
        return OracleResult(value, se, method, trials)
    raise ValueError(f"unknown oracle method {method!r}")


def pri_total_variance_exact(weights, k: int) -> float:
    return math.fsum(exact_oracle(weights, k, i, "variance").value for i in range(len(weights)))


# --------------------------------------------------------------------------
# exact-k construction


@dataclass(frozen=True)
class InclusionScheme:
    """Independent inclusion with per-item probabilities summing to an integer k."""

    probs: tuple[float, ...]
    k: int

    @classmethod
    def from_probs(cls, probs, tol: float = 1e-9) -> "InclusionScheme":
        p = tuple(float(x) for x in probs)
        if any(not (-tol <= x <= 1 + tol) for x in p):
            raise ValueError("inclusion probabilities must lie in [0, 1]")
        total = math.fsum(p)
        k = round(total)
        if abs(total - k) > tol * max(1, k):
            raise ValueError(f"probabilities sum to {total!r}, not an integer")
        return cls(tuple(min(1.0, max(0.0, x)) for x in p), int(k))

    @classmethod
    def threshold(cls, weights, k: int) -> "InclusionScheme":
        tau = solve_threshold(weights, k)
        if tau <= 0:
            return cls.from_probs([1.0 if w > 0 else 0.0 for w in weights])
        return cls.from_probs([min(1.0, w / tau) for w in weights])


@dataclass(frozen=True)
class ExactKEvent:
    """Pick every ``forced`` item plus ``pick`` items uniformly from ``pool``."""

    mass: float
    forced: tuple[int, ...]
    pool: tuple[int, ...] = ()
    pick: int = 0

    @property
    def size(self) -> int:
        return len(self.forced) + self.pick

    def inclusion(self, i: int) -> float:
        if i in self.forced:
            return 1.0
        if i in self.pool:
            return self.pick / len(self.pool)
        return 0.0


def exactify(scheme: InclusionScheme | Sequence[float], snap: float = 1e-12) -> list[ExactKEvent]:
    """Mixture of exactly-k events with the same per-item inclusion probabilities.

    Tracks, per item, the remaining probability of being picked (p) and of not
    being picked (r). Each round picks the forced items (r = 0) plus a uniform
    subset of the unsettled ones, with the largest mass that keeps every p and
    r nonnegative; that settles at least one item per round.
    """
    if not isinstance(scheme, InclusionScheme):
        scheme = InclusionScheme.from_probs(scheme)
    k = scheme.k
    p = np.array(scheme.probs, dtype=np.float64)
    r = 1.0 - p
    n = len(p)
    remaining = 1.0
    events: list[ExactKEvent] = []
    for _ in range(n + 2):
        if remaining <= snap:
            break
        p[p <= snap] = 0.0
        r[r <= snap] = 0.0
        unsettled = np.flatnonzero((p > 0) & (r > 0))
        forced = np.flatnonzero((r == 0) & (p > 0))
        if len(unsettled) == 0:
            if len(forced) != k:
                raise ArithmeticError(f"final event would pick {len(forced)} items, expected {k}")
            events.append(ExactKEvent(float(remaining), tuple(int(i) for i in forced)))
            remaining = 0.0
            break
        n_u = len(unsettled)
        k_u = k - len(forced)
        if not (0 < k_u < n_u):
            raise ArithmeticError(f"inconsistent residual: pick {k_u} of {n_u} unsettled items")
        mass = min(p[unsettled].min() * n_u / k_u, r[unsettled].min() * n_u / (n_u - k_u))
        mass = min(mass, remaining)
        events.append(ExactKEvent(float(mass), tuple(int(i) for i in forced),
                                  tuple(int(i) for i in unsettled), k_u))
        excluded = np.flatnonzero((p == 0) & (r > 0))
        p[unsettled] -= mass * k_u / n_u
        r[unsettled] -= mass * (n_u - k_u) / n_u
        p[forced] -= mass
        r[excluded] -= mass
        remaining -= mass
    else:  # pragma: no cover
        raise ArithmeticError("construction did not terminate")
    return events


def marginals(events: Sequence[ExactKEvent], n: int) -> np.ndarray:
    out = np.zeros(n)
    for ev in events:
        for i in ev.forced:
            out[i] += ev.mass
        if ev.pool:
            share = ev.mass * ev.pick / len(ev.pool)
            for i in ev.pool:
                out[i] += share
    return out


def sample_exact_k(events: Sequence[ExactKEvent], n: int, size: int, gen: SeededGenerator) -> np.ndarray:
    """Draw ``size`` sets from the mixture as a boolean (size, n) inclusion matrix."""
    masses = np.array([ev.mass for ev in events])
    cdf = np.cumsum(masses)
    which = np.minimum(np.searchsorted(cdf, gen.alphas(size) * cdf[-1], side="right"), len(events) - 1)
    out = np.zeros((size, n), dtype=bool)
    for e_idx, ev in enumerate(events):
        rows = np.flatnonzero(which == e_idx)
        if len(rows) == 0:
            continue
        if ev.forced:
            out[np.ix_(rows, list(ev.forced))] = True
        if ev.pick:
            pool = np.array(ev.pool)
            keys = gen.alphas((len(rows), len(pool)))
            chosen = np.argpartition(keys, ev.pick - 1, axis=1)[:, :ev.pick]
            out[rows[:, None], pool[chosen]] = True
    return out


# --------------------------------------------------------------------------
# PRI[k+1] against THR[k]


@dataclass(frozen=True)
class ConjectureRecord:
    """Observed totals; empirical evidence only, never a proof."""

    k: int
    thr_total: float
    pri_total: float
    pri_stderr: float
    method: str
    holds: bool
    label: str = "empirical evidence"

    @property
    def margin_sigma(self) -> float:
        """How many standard errors PRI[k+1] sits below THR[k] (inf if exact)."""
        gap = self.thr_total - self.pri_total
        if self.pri_stderr == 0:
            return math.inf if gap >= 0 else -math.inf
        return gap / self.pri_stderr


def pri_total_variance_mc(weights, k: int, trials: int, seed: int) -> tuple[float, float]:
    """Mean and standard error of sum_i (w_hat_i - w_i)^2 under PRI[k]."""
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    acc = mc.RunningMoments()
    for t, child in mc.chunks(trials, n, SeededGenerator(seed)):
        est = mc.priority_block(w, k, child.alphas((t, n))).est
        acc.update(((est - w[None, :]) ** 2).sum(axis=1))
    return float(acc.mean), float(acc.stderr)


def conjecture_compare(weights, k: int, trials: int = 100_000, seed: int = 0,
                       sigmas: float = 3.0) -> ConjectureRecord:
    """Total variance of threshold sampling with expected size k against priority sampling of k+1."""
    w = [float(x) for x in weights]
    n = len(w)
    if k + 1 > n:
        raise ValueError("need k + 1 <= n")
    thr_total = thr_total_variance(w, k)
    if k + 1 == n:
        pri, se, method = 0.0, 0.0, "exact"
    elif n <= ORACLE_MAX_N and all(x > 0 for x in w):
        pri, se, method = pri_total_variance_exact(w, k + 1), 0.0, "quadrature"
    else:
        pri, se = pri_total_variance_mc(w, k + 1, trials, seed)
        method = "monte_carlo"
    holds = pri <= thr_total + sigmas * se
    return ConjectureRecord(k, thr_total, pri, se, method, holds)
