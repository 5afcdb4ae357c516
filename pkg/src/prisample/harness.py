"""Monte Carlo verification suites and the scheme-comparison experiment.

Verification draws trials in chunks, each from a child generator spawned off
one seed, and merges chunk moments in chunk order, so a report depends only
on (seed, trials).

The comparison experiment rebuilds every sample from scratch per replicate.
Within a replicate, priority and threshold sampling read the same alpha
vector, and each scheme's randomness is shared across the k grid (a sample of
size k is a prefix of the sample of size k' > k), which makes the curves
smooth in k without changing any marginal distribution.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from . import analysis
from . import montecarlo as mc
from .model import SchemeTag, SeededGenerator
from .samplers import solve_threshold
from .traces import Trace, TraceSpec, generate_trace

__all__ = [
    "CheckResult",
    "ComparisonResult",
    "ComparisonRow",
    "DistinctCountRow",
    "MatrixErrorRow",
    "VerificationReport",
    "mc_verify",
    "run_comparison",
    "scheme_moments",
    "SUITES",
    "run_suite",
]

SIGMAS = 3.0
MIN_TRIALS = 10_000


@dataclass(frozen=True)
class CheckResult:
    check: str
    passed: bool
    estimate: float
    target: float
    stderr: float
    detail: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class VerificationReport:
    checks: list[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def extend(self, other: "VerificationReport") -> None:
        self.checks.extend(other.checks)

    def failures(self) -> list[CheckResult]:
        return [c for c in self.checks if not c.passed]


def _within(est: float, target: float, se: float, sigmas: float = SIGMAS) -> bool:
    return abs(est - target) <= sigmas * se


# --------------------------------------------------------------------------
# identity checks


CHECKS = ("unbiased", "unbiased_subsets", "unit_identity", "covariance", "variance_estimator", "subset_variance", "sample_all")


def mc_verify(weights, k: int, trials: int, checks: Iterable[str] = CHECKS, seed: int = 0,
              subsets: Optional[dict] = None, label: str = "", sigmas: float = SIGMAS,
              familywise: bool = False) -> VerificationReport:
    """Monte Carlo checks of priority sampling on one weight vector.

    ``subsets`` maps a name to a boolean mask; their sums are checked for
    unbiasedness and for the summed variance estimate. Every check compares a
    trial mean to its known target within ``sigmas`` empirical standard
    errors. With ``familywise`` the band widens (Bonferroni) so that the whole
    batch, not each check, has the false-alarm rate of one 3-sigma test.
    """
    if trials < MIN_TRIALS:
        raise ValueError(f"need at least {MIN_TRIALS} trials")
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    checks = tuple(checks)
    unknown = set(checks) - set(CHECKS)
    if unknown:
        raise ValueError(f"unknown checks: {sorted(unknown)}")
    subsets = {"total": np.ones(n, dtype=bool), **(subsets or {})}
    masks = np.array([np.asarray(m, dtype=bool) for m in subsets.values()], dtype=np.float64)
    pairs = np.triu_indices(n, 1) if "covariance" in checks else None

    est_m = mc.RunningMoments(n)
    z_m = mc.RunningMoments(n)
    sub_m = mc.RunningMoments(len(subsets))
    subz_m = mc.RunningMoments(len(subsets))
    ktau_m = mc.RunningMoments()
    cov_m = mc.RunningMoments(len(pairs[0])) if pairs is not None else None
    max_dev = 0.0
    for t, child in mc.chunks(trials, n, SeededGenerator(seed)):
        block = mc.priority_block(w, k, child.alphas((t, n)))
        err = block.est - w[None, :]
        est_m.update(block.est)
        sub_sum = block.est @ masks.T
        sub_m.update(sub_sum)
        ktau_m.update(k * block.tau)
        max_dev = max(max_dev, float(np.abs(err).max()) if err.size else 0.0)
        if "variance_estimator" in checks or "subset_variance" in checks:
            v = block.var_est(w)
            z_m.update(v - err ** 2)
            subz_m.update(v @ masks.T - (err @ masks.T) ** 2)
        if cov_m is not None:
            cov_m.update(err[:, pairs[0]] * err[:, pairs[1]])

    tag = {"k": k, "n": n, "trials": trials, "seed": seed}
    if label:
        tag["corpus"] = label
    found = []  # (check, estimate, target, stderr, detail)
    if "unbiased" in checks:
        for i in range(n):
            found.append(("unbiased_item", est_m.mean[i], w[i], est_m.stderr[i], {**tag, "item": i}))
    if "unbiased" in checks or "unbiased_subsets" in checks:
        for s, name in enumerate(subsets):
            found.append(("unbiased_subset", sub_m.mean[s], masks[s] @ w, sub_m.stderr[s], {**tag, "subset": name}))
    if "unit_identity" in checks and n > k and np.all(w == 1.0):
        # E[k tau] = n for unit weights
        found.append(("unit_identity", ktau_m.mean, n, ktau_m.stderr, tag))
    if cov_m is not None:
        for p, (i, j) in enumerate(zip(*pairs)):
            found.append(("covariance", cov_m.mean[p], 0.0, cov_m.stderr[p], {**tag, "pair": [int(i), int(j)]}))
    if "variance_estimator" in checks:
        for i in range(n):
            found.append(("variance_estimator", z_m.mean[i], 0.0, z_m.stderr[i], {**tag, "item": i}))
    if "subset_variance" in checks:
        for s, name in enumerate(subsets):
            found.append(("subset_variance", subz_m.mean[s], 0.0, subz_m.stderr[s], {**tag, "subset": name}))
    if familywise and found:
        sigmas = float(stats.norm.isf(stats.norm.sf(sigmas) / len(found)))
    report = VerificationReport()
    for name, m, target, se, detail in found:
        m, target, se = float(m), float(target), float(se)
        report.checks.append(CheckResult(name, _within(m, target, se, sigmas), m, target, se,
                                         {**detail, "sigmas": sigmas}))
    if "sample_all" in checks and n <= k:
        report.checks.append(CheckResult("sample_all", max_dev == 0.0, max_dev, 0.0, 0.0, tag))
    return report


def scheme_moments(scheme: SchemeTag, weights, k: int, trials: int, seed: int = 0):
    """Per-item mean and variance of one scheme's weight estimates, with standard errors.

    Returns (mean, mean_se, var, var_se); variances are taken around the true
    weights, which every scheme here estimates without bias.
    """
    w = np.asarray(weights, dtype=np.float64)
    n = len(w)
    tau_thr = solve_threshold(w, k) if scheme is SchemeTag.THR else None
    est_m = mc.RunningMoments(n)
    sq_m = mc.RunningMoments(n)
    for t, child in mc.chunks(trials, n, SeededGenerator(seed)):
        block = mc.estimate_block(scheme, w, k, t, child, tau_thr)
        est_m.update(block.est)
        sq_m.update((block.est - w[None, :]) ** 2)
    return est_m.mean, est_m.stderr, sq_m.mean, sq_m.stderr


# --------------------------------------------------------------------------
# comparison experiment


@dataclass(frozen=True)
class ComparisonRow:
    scheme: str
    k: int
    subset: str
    truth: float
    estimate: float
    rel_error: float
    replicate: int
    alpha_digest: str = ""


@dataclass(frozen=True)
class MatrixErrorRow:
    scheme: str
    k: int
    replicate: int
    entries: int
    error: float  # sum |estimate - truth| / total truth


@dataclass(frozen=True)
class DistinctCountRow:
    scheme: str
    k: int
    replicate: int
    distinct: int
    percent: float


@dataclass
class ComparisonResult:
    rows: list[ComparisonRow] = field(default_factory=list)
    matrix: list[MatrixErrorRow] = field(default_factory=list)
    distinct: list[DistinctCountRow] = field(default_factory=list)

    def median_abs_error(self, scheme: str, k: int, subset: str) -> float:
        vals = [abs(r.rel_error) for r in self.rows if r.scheme == scheme and r.k == k and r.subset == subset]
        return float(np.median(vals))

    def median_matrix_error(self, scheme: str, k: int) -> float:
        return float(np.median([r.error for r in self.matrix if r.scheme == scheme and r.k == k]))

    def mean_matrix_error(self, scheme: str, k: int) -> float:
        return float(np.mean([r.error for r in self.matrix if r.scheme == scheme and r.k == k]))

    def median_distinct_percent(self, scheme: str, k: int) -> float:
        return float(np.median([r.percent for r in self.distinct if r.scheme == scheme and r.k == k]))


def default_subsets(trace: Trace) -> tuple[dict, Optional[np.ndarray]]:
    """Label masks and, for traces with interface pairs, the 64 matrix cell ids."""
    items = trace.items
    key = {"table1-mix": "app", "large-small": "size"}.get(trace.spec.law)
    subsets = {}
    if key:
        labels = sorted({it.attributes[key] for it in items})
        for lab in labels:
            subsets[f"{key}={lab}"] = np.array([it.attributes[key] == lab for it in items])
    subsets["total"] = np.ones(len(items), dtype=bool)
    cells = None
    if items and "in" in items[0].attributes:
        cells = np.array([int(it.attributes["in"]) * 8 + int(it.attributes["out"]) for it in items])
    return subsets, cells


_SCHEMES = {
    "pri": SchemeTag.PRI, "PRI": SchemeTag.PRI,
    "thr": SchemeTag.THR, "THR": SchemeTag.THR,
    "uwr": SchemeTag.UR, "U-R": SchemeTag.UR,
    "wwr": SchemeTag.WR, "W+R": SchemeTag.WR,
}


def parse_scheme(name: str) -> SchemeTag:
    try:
        return _SCHEMES[name]
    except KeyError:
        raise ValueError(f"unknown scheme {name!r}; expected pri, thr, uwr or wwr") from None


def _digest(a: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(a).tobytes()).hexdigest()[:16]


def run_comparison(trace: Trace, schemes: Sequence, k_grid: Sequence[int], replicates: int,
                   subsets: Optional[dict] = None, seed: int = 0,
                   cells: Optional[np.ndarray] = None) -> ComparisonResult:
    """Estimate every subset under every (scheme, k, replicate).

    ``subsets`` maps labels to boolean masks over the trace (default: one per
    application label plus the total). ``cells`` assigns each item to one of
    64 traffic-matrix entries; when present a matrix error row is emitted.
    """
    schemes = [s if isinstance(s, SchemeTag) else parse_scheme(s) for s in schemes]
    k_grid = sorted(int(k) for k in k_grid)
    if any(k < 1 for k in k_grid):
        raise ValueError("k must be at least 1")
    w = trace.weights
    n = len(w)
    if subsets is None:
        subsets, default_cells = default_subsets(trace)
        cells = default_cells if cells is None else cells
    names = list(subsets)
    masks = np.array([np.asarray(subsets[s], dtype=np.float64) for s in names])
    truth = masks @ w
    if np.any(truth <= 0):
        bad = [s for s, t in zip(names, truth) if t <= 0]
        raise ValueError(f"subsets need positive true totals: {bad}")
    cell_truth = np.bincount(cells, weights=w, minlength=64) if cells is not None else None
    tau_thr = {k: solve_threshold(w, k) for k in k_grid} if SchemeTag.THR in schemes else {}
    ids = np.arange(n)
    out = ComparisonResult()
    root = SeededGenerator(seed)
    for r in range(replicates):
        gen = root.spawn(r)
        alphas = gen.spawn(0).alphas(n)
        digest = _digest(alphas)
        q = w / alphas
        pri_order = np.lexsort((ids, -q))
        ur_order = np.argsort(gen.spawn(1).alphas(n), kind="stable")
        wr_draws = mc.wr_draws(w, k_grid[-1], gen.spawn(2).alphas(k_grid[-1])[None, :])[0] if n else None
        for scheme in schemes:
            for k in k_grid:
                sampled = np.zeros(n, dtype=bool)
                shared = ""
                if scheme is SchemeTag.PRI:
                    shared = digest
                    sampled[pri_order[:k]] = True
                    tau = q[pri_order[k]] if k < n else 0.0
                    est = np.where(sampled, np.maximum(w, tau), 0.0)
                elif scheme is SchemeTag.THR:
                    shared = digest
                    tau = tau_thr[k]
                    sampled = q > tau if tau > 0 else np.ones(n, dtype=bool)
                    est = np.where(sampled, np.maximum(w, tau), 0.0)
                elif scheme is SchemeTag.UR:
                    sampled[ur_order[:k]] = True
                    est = np.where(sampled, w * max(1.0, n / k), 0.0)
                elif scheme is SchemeTag.WR:
                    sampled[wr_draws[:k]] = True
                    p = -np.expm1(k * np.log1p(-np.minimum(w / w.sum(), 1.0)))
                    with np.errstate(divide="ignore", invalid="ignore"):
                        est = np.where(sampled, w / p, 0.0)
                else:
                    raise ValueError(f"scheme {scheme.value} is not part of the comparison")
                sub_est = masks @ est
                for name, t_, e_ in zip(names, truth, sub_est):
                    out.rows.append(ComparisonRow(scheme.value, k, name, float(t_), float(e_),
                                                  float((e_ - t_) / t_), r, shared))
                if cell_truth is not None:
                    cell_est = np.bincount(cells, weights=est, minlength=64)
                    err = math.fsum(np.abs(cell_est - cell_truth)) / math.fsum(cell_truth)
                    out.matrix.append(MatrixErrorRow(scheme.value, k, r, 64, err))
                distinct = int(sampled.sum())
                out.distinct.append(DistinctCountRow(scheme.value, k, r, distinct, 100.0 * distinct / k))
    return out


# --------------------------------------------------------------------------
# suites driven by the CLI


def identity_corpus() -> list[tuple[str, np.ndarray, int, tuple, dict]]:
    ls = generate_trace(TraceSpec.parse("large-small:l=3,N=1e6,n=1000")).weights
    every = ("unbiased", "unit_identity", "covariance", "variance_estimator", "subset_variance")
    return [
        ("unit-10", np.ones(10), 3, every, {}),
        ("8-4-2-1-1-1", np.array([8.0, 4, 2, 1, 1, 1]), 3, every, {}),
        # a single small item is sampled about once per 10^4 trials here, so only sums are checked
        ("large-small", ls, 10, ("unbiased_subsets", "subset_variance"), {"large": ls > 1, "small": ls == 1}),
        ("sample-all", np.array([8.0, 4, 2, 1, 1, 1]), 6, ("sample_all",), {}),
    ]


def suite_identities(trials: int, seed: int) -> VerificationReport:
    report = VerificationReport()
    for idx, (label, w, k, checks, subsets) in enumerate(identity_corpus()):
        # keep runtime flat on the wide vector
        t = max(MIN_TRIALS, trials // 20) if len(w) > 100 else trials
        report.extend(mc_verify(w, k, t, checks, seed + idx, subsets, label, familywise=True))
    return report


CLOSED_FORM_CASE = (20, 5)
CLOSED_FORM_TOL = 0.02


def suite_closed_forms(trials: int, seed: int) -> VerificationReport:
    n, k = CLOSED_FORM_CASE
    report = VerificationReport()
    for idx, scheme in enumerate((SchemeTag.PRI, SchemeTag.UR, SchemeTag.THR, SchemeTag.WR, SchemeTag.WR_COUNT)):
        target = analysis.unit_variance(scheme, n, k)
        _, _, var, var_se = scheme_moments(scheme, np.ones(n), k, trials, seed + idx)
        est = float(var.mean())
        # items are exchangeable; the spread of per-item variances bounds the error of their mean
        se = float(np.sqrt((var_se ** 2).mean() / n))
        rel = abs(est - target) / target
        report.checks.append(CheckResult(
            "closed_form_variance", rel <= CLOSED_FORM_TOL, est, target, se,
            {"scheme": scheme.value, "n": n, "k": k, "trials": trials, "rel_error": rel, "tolerance": CLOSED_FORM_TOL},
        ))
    return report


ORACLE_CORPUS = (
    ((1.0, 1.0, 1.0), 2),
    ((1.0, 1.0, 1.0, 1.0), 2),
    ((1.0, 1.0, 1.0, 1.0), 3),
    ((4.0, 2.0, 1.0, 1.0), 2),
    ((4.0, 2.0, 1.0, 1.0), 3),
    ((3.0, 2.0, 1.0), 2),
)
ORACLE_TOL = 1e-7


def suite_oracle(trials: int = 0, seed: int = 0) -> VerificationReport:
    report = VerificationReport()
    for weights, k in ORACLE_CORPUS:
        n = len(weights)
        for i, w in enumerate(weights):
            m = analysis.exact_oracle(weights, k, i, "mean").value
            report.checks.append(CheckResult("oracle_mean", abs(m - w) <= ORACLE_TOL * w, m, w, 0.0,
                                             {"weights": list(weights), "k": k, "item": i}))
        if all(x == 1.0 for x in weights):
            v = analysis.exact_oracle(weights, k, 0, "variance").value
            target = analysis.unit_variance(SchemeTag.PRI, n, k)
            report.checks.append(CheckResult("oracle_unit_variance", abs(v - target) <= ORACLE_TOL * max(target, 1.0),
                                             v, target, 0.0, {"n": n, "k": k}))
        if k >= 2 and n > k:
            c = analysis.exact_oracle(weights, k, 0, "covariance", other_item=1).value
            report.checks.append(CheckResult("oracle_covariance", abs(c) <= ORACLE_TOL * max(weights), c, 0.0, 0.0,
                                             {"weights": list(weights), "k": k, "pair": [0, 1]}))
    return report


def random_marginals(gen: SeededGenerator, max_n: int = 12) -> tuple[np.ndarray, int]:
    """A feasible marginal vector: n <= max_n entries in [0, 1] summing to an integer k."""
    n = 2 + gen.index(max_n - 1)
    k = 1 + gen.index(n - 1)
    p = gen.alphas(n)
    # push some entries to the boundary, where the construction has corner cases
    p[gen.alphas(n) < 0.15] = 1.0
    p[gen.alphas(n) < 0.1] = 0.0
    for _ in range(100):
        free = (p > 0) & (p < 1)
        gap = k - p.sum()
        if abs(gap) < 1e-15 or not free.any():
            break
        if gap > 0:
            room = np.where(free, 1 - p, 0.0)
            p = p + room * min(1.0, gap / room.sum())
        else:
            p = p * np.where(free, 1.0 - min(1.0, -gap / p[free].sum()), 1.0)
    if abs(p.sum() - k) > 1e-12 or np.count_nonzero(p) < k:
        p = np.full(n, k / n)
    return p, k


def suite_exactify(trials: int = 1000, seed: int = 0) -> VerificationReport:
    gen = SeededGenerator(seed)
    report = VerificationReport()
    worst_marg, worst_mass, max_events_ratio, bad = 0.0, 0.0, 0.0, 0
    cases = max(1, min(trials, 1000)) if trials else 1000
    for _ in range(cases):
        p, k = random_marginals(gen)
        n = len(p)
        events = analysis.exactify(p)
        mass_err = abs(math.fsum(e.mass for e in events) - 1.0)
        marg_err = float(np.abs(analysis.marginals(events, n) - p).max())
        sizes_ok = all(e.size == k for e in events)
        worst_mass = max(worst_mass, mass_err)
        worst_marg = max(worst_marg, marg_err)
        max_events_ratio = max(max_events_ratio, len(events) / n)
        if not (len(events) <= n and mass_err <= 1e-12 and marg_err <= 1e-9 and sizes_ok):
            bad += 1
    report.checks.append(CheckResult("exactify_events", max_events_ratio <= 1.0, max_events_ratio, 1.0, 0.0, {"cases": cases}))
    report.checks.append(CheckResult("exactify_mass", worst_mass <= 1e-12, worst_mass, 0.0, 0.0, {"cases": cases}))
    report.checks.append(CheckResult("exactify_marginals", worst_marg <= 1e-9, worst_marg, 0.0, 0.0, {"cases": cases}))
    report.checks.append(CheckResult("exactify_all_cases", bad == 0, float(bad), 0.0, 0.0, {"cases": cases}))
    return report


def conjecture_corpus() -> list[tuple[str, np.ndarray]]:
    ls = generate_trace(TraceSpec.parse("large-small:l=3,N=1e6,n=1000")).weights
    pareto = generate_trace(TraceSpec.parse("pareto:n=1000,shape=1.1,seed=1")).weights
    return [
        ("unit-20", np.ones(20)),
        ("8-4-2-1-1-1", np.array([8.0, 4, 2, 1, 1, 1])),
        ("large-small", ls),
        ("pareto-1.1", pareto),
    ]


def suite_conjecture(trials: int, seed: int, ks: Sequence[int] = (2, 3, 5, 10)) -> VerificationReport:
    report = VerificationReport()
    for idx, (label, w) in enumerate(conjecture_corpus()):
        t = trials if len(w) <= 100 else max(MIN_TRIALS, trials // 10)
        for k in ks:
            if k + 1 > len(w):
                continue
            rec = analysis.conjecture_compare(w, k, trials=t, seed=seed + 100 * idx + k)
            report.checks.append(CheckResult(
                "conjecture", rec.holds, rec.pri_total, rec.thr_total, rec.pri_stderr,
                {"corpus": label, "k": k, "method": rec.method, "note": rec.label},
            ))
    return report


SUITES = {
    "identities": suite_identities,
    "closed-forms": suite_closed_forms,
    "oracle": suite_oracle,
    "exactify": suite_exactify,
    "conjecture": suite_conjecture,
}


def run_suite(name: str, trials: int, seed: int) -> VerificationReport:
    try:
        fn = SUITES[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}; expected one of {', '.join(SUITES)}") from None
    return fn(trials, seed)
