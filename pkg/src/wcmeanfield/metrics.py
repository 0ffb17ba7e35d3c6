"""Distances between the finite network and its mean-field limit."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .meanfield import MeanFieldSolution, solve, write_csv
from .model import ModelParams
from .moments import QuadratureRule
from .network import simulate
from .sampler import marginal_law, sample_paths

TAIL_BULK_SURVIVAL = 0.2


# -- coupled path distance --------------------------------------------------


@dataclass
class DistanceEstimate:
    n: int
    estimate: float
    se: float
    replications: int
    seed_base: int
    values: list = field(repr=False)


def _replication(params, solution, n, run, seed, group, w1_times, substeps):
    rep_run = run.replace(seed=seed)
    net = simulate(params, n, rep_run, store_groups=[group], digest_groups=[group],
                   substeps=substeps)
    mf = sample_paths(solution, 1, rep_run, groups=[group], digest_groups=[group],
                      substeps=substeps)
    if net.noise_digests != mf.noise_digests:
        raise RuntimeError("network and mean-field paths did not consume the same noise")
    if net.labels != mf.labels or not np.array_equal(net.times, mf.times):
        raise ValueError("network and mean-field grids do not match")
    dist = float(np.max(np.abs(net.values - mf.values)))
    snaps = {}
    for t in w1_times:
        k = int(np.argmin(np.abs(net.times - t)))
        snaps[float(net.times[k])] = net.values[k].copy()
    return dist, snaps


def coupled_distance(params: ModelParams, n: int, replications: int, run, *,
                     solution: MeanFieldSolution | None = None, group: int = 1,
                     n_jobs: int = 1, w1_times=(), substeps: int = 1,
                     _snapshots=None) -> DistanceEstimate:
    """Monte-Carlo estimate of E[sup_t max_(alpha,p) |X^{g,alpha,p}_t - Xbar^{alpha,p}_t|].

    Replication r uses seed ``run.seed + r``. In each, the network and one
    mean-field path are driven by the same Brownian increments for group
    ``group``; the supremum is taken over the discrete time grid. Results do
    not depend on ``n_jobs``. ``substeps`` > 1 builds each increment from that
    many finer draws (see NoiseStream.increments).
    """
    if replications < 2:
        raise ValueError("need at least 2 replications for a standard error")
    if not -n <= group <= n:
        raise ValueError(f"group {group} does not exist for n={n}")
    if solution is None:
        solution = solve(params, run.T, run.dt, QuadratureRule(run.quadrature_order))
    seeds = [run.seed + r for r in range(replications)]

    def job(seed):
        return _replication(params, solution, n, run, seed, group, w1_times, substeps)

    if n_jobs > 1:
        with ThreadPoolExecutor(n_jobs) as pool:
            results = list(pool.map(job, seeds))
    else:
        results = [job(s) for s in seeds]
    values = [r[0] for r in results]
    if _snapshots is not None:
        _snapshots.extend(r[1] for r in results)
    arr = np.array(values)
    return DistanceEstimate(
        n=n,
        estimate=float(arr.mean()),
        se=float(arr.std(ddof=1) / math.sqrt(len(arr))),
        replications=replications,
        seed_base=run.seed,
        values=values,
    )


# -- Wasserstein-1 on the line ----------------------------------------------


@dataclass(frozen=True)
class GaussianRef:
    mean: float
    sd: float


def _gaussian_partial_mean(u, ref: GaussianRef):
    """int_0^u Q(v) dv for the Gaussian quantile function Q."""
    z = stats.norm.ppf(u)
    return ref.mean * u - ref.sd * stats.norm.pdf(z)


def w1_marginal(sample_a, sample_b) -> float:
    """One-dimensional Wasserstein-1 distance.

    ``sample_b`` is either another sample or a GaussianRef. Equal-size
    samples use the mean absolute difference of sorted values; otherwise the
    L1 distance between quantile functions is integrated exactly.
    """
    a = np.sort(np.asarray(sample_a, dtype=float).ravel())
    if a.size == 0:
        raise ValueError("empty sample")
    if isinstance(sample_b, GaussianRef):
        return _w1_gaussian(a, sample_b)
    b = np.sort(np.asarray(sample_b, dtype=float).ravel())
    if b.size == 0:
        raise ValueError("empty sample")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    # quantile functions are step functions; integrate on the merged breakpoints
    u = np.union1d(np.arange(a.size + 1) / a.size, np.arange(b.size + 1) / b.size)
    mid = 0.5 * (u[1:] + u[:-1])
    qa = a[np.minimum((mid * a.size).astype(int), a.size - 1)]
    qb = b[np.minimum((mid * b.size).astype(int), b.size - 1)]
    return float(np.sum(np.abs(qa - qb) * np.diff(u)))


def _w1_gaussian(a, ref: GaussianRef) -> float:
    if ref.sd == 0:
        return float(np.mean(np.abs(a - ref.mean)))
    N = a.size
    u0 = np.arange(N) / N
    u1 = np.arange(1, N + 1) / N
    # split each step at the level where the Gaussian quantile crosses the step value
    us = np.clip(stats.norm.cdf((a - ref.mean) / ref.sd), u0, u1)
    G0, Gs, G1 = (_gaussian_partial_mean(u, ref) for u in (u0, us, u1))
    below = a * (us - u0) - (Gs - G0)
    above = (G1 - Gs) - a * (u1 - us)
    return float(np.sum(below + above))


# -- tail decay ---------------------------------------------------------------


@dataclass
class TailFit:
    slope: float
    intercept: float
    m0: float
    m_used: list
    survival: list
    delta_hat: float
    delta_bound: float | None = None

    def passes(self, tolerance: float = 0.2) -> bool:
        if self.delta_bound is None:
            raise ValueError("no reference decay rate")
        return self.slope <= -self.delta_bound * (1.0 - tolerance)


def delta_from_solution(solution: MeanFieldSolution) -> float:
    """1 / (8 sup_t max_alpha q^alpha(t))."""
    return 1.0 / (8.0 * float(np.max(solution.q)))


def tail_decay_fit(sup_norms, m_grid, delta_bound: float | None = None) -> TailFit:
    """Least-squares slope of log P(sup ||X|| >= M) against M^2.

    Grid points in the bulk (survival above 0.2) and points with an empty
    empirical tail are excluded.
    """
    x = np.asarray(sup_norms, dtype=float)
    M = np.sort(np.asarray(m_grid, dtype=float))
    surv = np.array([np.mean(x >= m) for m in M])
    in_tail = np.nonzero(surv <= TAIL_BULK_SURVIVAL)[0]
    m0 = float(M[in_tail[0]]) if in_tail.size else math.inf
    keep = (M >= m0) & (surv > 0)
    if keep.sum() < 3:
        raise ValueError("fewer than 3 usable tail points")
    slope, intercept = np.polyfit(M[keep] ** 2, np.log(surv[keep]), 1)
    return TailFit(
        slope=float(slope),
        intercept=float(intercept),
        m0=m0,
        m_used=M[keep].tolist(),
        survival=surv[keep].tolist(),
        delta_hat=float(-slope),
        delta_bound=delta_bound,
    )


def default_m_grid(sup_norms, points: int = 12):
    """Evenly spaced M between the 80% and 99.9% quantiles of the sup norms."""
    lo, hi = np.quantile(np.asarray(sup_norms, dtype=float), [0.8, 0.999])
    return np.linspace(lo, hi, points)


# -- convergence study ---------------------------------------------------------


@dataclass
class ConvergenceReport:
    n_values: list
    estimates: list
    se: list
    replications: int
    seed_base: int
    w1: dict = field(default_factory=dict)
    """n -> {t -> {label -> W1 vs the exact marginal}}"""
    loglog_slope: float | None = None
    refinement: dict | None = None

    def decreasing(self, k: float = 2.0) -> bool:
        """Each consecutive decrease exceeds k pooled standard errors."""
        e, s = self.estimates, self.se
        return all(
            e[i] - e[i + 1] > k * math.hypot(s[i], s[i + 1]) for i in range(len(e) - 1)
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def to_csv(self, path) -> None:
        rows = [
            [n, e, s, self.replications, self.seed_base]
            for n, e, s in zip(self.n_values, self.estimates, self.se)
        ]
        write_csv(path, ["n", "estimate", "se", "reps", "seed_base"], rows)


def convergence_study(params: ModelParams, n_values, replications: int, run, *,
                      n_jobs: int = 1, w1_times=(), refine: bool = False) -> ConvergenceReport:
    """coupled_distance over a ladder of n, plus per-time marginal W1 diagnostics."""
    rule = QuadratureRule(run.quadrature_order)
    solution = solve(params, run.T, run.dt, rule)
    estimates, w1 = [], {}
    for n in n_values:
        snaps = []
        est = coupled_distance(params, n, replications, run, solution=solution,
                               n_jobs=n_jobs, w1_times=w1_times, _snapshots=snaps)
        estimates.append(est)
        w1[str(n)] = _marginal_w1(solution, snaps)
    slope = None
    if len(n_values) > 1:
        slope = float(np.polyfit(np.log(n_values), np.log([e.estimate for e in estimates]), 1)[0])
    report = ConvergenceReport(
        n_values=list(n_values),
        estimates=[e.estimate for e in estimates],
        se=[e.se for e in estimates],
        replications=replications,
        seed_base=run.seed,
        w1=w1,
        loglog_slope=slope,
    )
    if refine:
        report.refinement = refinement_check(params, n_values[0], replications, run)
    return report


def _marginal_w1(solution, snapshots) -> dict:
    if not snapshots:
        return {}
    out = {}
    labels = solution.params.layout(0).slot_labels()
    for t in snapshots[0]:
        law = marginal_law(solution, t)
        sample = np.array([s[t] for s in snapshots])
        out[repr(t)] = {
            f"{a}_{p}": w1_marginal(sample[:, c], GaussianRef(law.mean[c], math.sqrt(law.variance[c])))
            for c, (a, p) in enumerate(labels)
        }
    return out


def refinement_check(params: ModelParams, n: int, replications: int, run,
                     tolerance: float = 0.05) -> dict:
    """Compare the coupled distance at dt and dt/2 on the same Brownian paths.

    The sup over continuous time is approximated by the grid sup, so the
    estimate is only trusted when halving dt moves it by less than
    ``tolerance`` relative. The coarse run sums pairs of the fine run's
    draws, so both runs see identical Brownian motions.
    """
    coarse = coupled_distance(params, n, replications, run, substeps=2)
    fine = coupled_distance(params, n, replications, run.replace(dt=run.dt / 2))
    rel = abs(fine.estimate - coarse.estimate) / coarse.estimate
    return {
        "n": n,
        "coarse": coarse.estimate,
        "fine": fine.estimate,
        "relative_change": rel,
        "accepted": bool(rel < tolerance),
    }
