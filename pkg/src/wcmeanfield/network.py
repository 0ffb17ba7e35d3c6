"""Euler-Maruyama integration of the finite (2n+1)-group network.

The all-to-all electrical coupling

    (2n+1)^-1 sum_{j,beta,q} J[alpha,beta] (x - X^{j,beta,q}) S(X^{j,beta,q})

is regrouped as (2n+1)^-1 sum_beta J[alpha,beta] (x A_beta - B_beta) with the
per-population sums A_beta = sum S(X) and B_beta = sum X S(X), so a step
costs O(N) instead of O(N^2).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .meanfield import IntegrationError, num_steps, write_csv
from .model import ConstantInput, Layout, ModelParams, NeuronIndex
from .noise import NoiseStream

BLOWUP_THRESHOLD = 1e8


class BlowUpError(IntegrationError):
    """State left the finite region |X| <= 1e8."""


@dataclass(frozen=True, eq=False)
class NetworkState:
    n: int
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(v)):
            raise ValueError("network state must be finite")
        object.__setattr__(self, "values", v)

    def grid(self, params: ModelParams) -> np.ndarray:
        """Values as a (2n+1, s_bar) array, one row per group."""
        layout = params.layout(self.n)
        if self.values.size != layout.size:
            raise ValueError(
                f"state has {self.values.size} values, layout needs {layout.size}"
            )
        return self.values.reshape(layout.num_groups, layout.s_bar)

    @classmethod
    def initial(cls, params: ModelParams, n: int, stream: NoiseStream | None = None):
        layout = params.layout(n)
        pop = params.slot_population
        mean = np.tile(params.x_ini[pop], layout.num_groups)
        var = np.tile(params.q_ini[pop], layout.num_groups)
        if stream is None or not np.any(var > 0):
            return cls(n, mean)
        keys = [astuple(layout.unflatten(k)) for k in range(layout.size)]
        return cls(n, stream.initial_values(keys, mean, var))


def astuple(idx: NeuronIndex):
    return (idx.group, idx.population, idx.slot)


@dataclass(frozen=True, eq=False)
class _Plan:
    """Per-parameter-set arrays used by the drift."""

    starts: np.ndarray
    pop: np.ndarray
    sigma: np.ndarray
    decay: float

    @classmethod
    def build(cls, params: ModelParams) -> "_Plan":
        widths = 2 * np.asarray(params.group_sizes) + 1
        starts = np.concatenate([[0], np.cumsum(widths)[:-1]])
        pop = params.slot_population
        return cls(starts, pop, params.sigma[pop], 1.0 / params.tau)


def coupling_stats(params: ModelParams, state) -> tuple[np.ndarray, np.ndarray]:
    """Per-population sums (A_beta, B_beta) of S(X) and X S(X) over all groups."""
    x = state.grid(params) if isinstance(state, NetworkState) else np.asarray(state, dtype=float)
    return _stats(params, _Plan.build(params), x)


def _stats(params, plan, x):
    s = params.sigmoid(x)
    a_slot = s.sum(axis=0)
    b_slot = (x * s).sum(axis=0)
    return np.add.reduceat(a_slot, plan.starts), np.add.reduceat(b_slot, plan.starts)


def network_drift(params: ModelParams, x, t: float, plan: _Plan | None = None,
                  current=None) -> np.ndarray:
    """Drift of every neuron for a (2n+1, s_bar) state array."""
    plan = plan or _Plan.build(params)
    x = np.asarray(x, dtype=float)
    A, B = _stats(params, plan, x)
    groups = x.shape[0]
    ja = (params.coupling @ A)[plan.pop] / groups
    jb = (params.coupling @ B)[plan.pop] / groups
    if current is None:
        current = params.input_vector(t)[plan.pop]
    return -x * plan.decay + current + x * ja - jb


def _check(x, step, t):
    peak = np.max(np.abs(x))
    if not peak <= BLOWUP_THRESHOLD:  # also catches NaN
        raise BlowUpError(f"network blew up (max |X| = {peak:.3g})", step, t)


def em_step(params: ModelParams, state: NetworkState, dt: float, noise,
            step: int = 0) -> NetworkState:
    """One Euler-Maruyama step; ``noise`` holds one standard normal per neuron."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    plan = _Plan.build(params)
    x = state.grid(params)
    xi = np.asarray(noise, dtype=float).reshape(x.shape)
    new = x + network_drift(params, x, state.t, plan) * dt + plan.sigma * math.sqrt(dt) * xi
    _check(new, step + 1, state.t + dt)
    return NetworkState(state.n, new.ravel(), state.t + dt)


@dataclass(eq=False)
class PathEnsemble:
    """Stored trajectories: ``values[k, c]`` is column ``labels[c]`` at ``times[k]``."""

    times: np.ndarray
    values: np.ndarray
    labels: list
    meta: dict = field(default_factory=dict)
    noise_digests: dict = field(default_factory=dict)
    sup_norm: np.ndarray | None = None
    """Running sup over all grid times of max |X| across each path's slots."""

    def column(self, label) -> np.ndarray:
        return self.values[:, self.labels.index(label)]

    def header(self) -> list[str]:
        return ["t"] + [f"{g}_{a}_{p}" for g, a, p in self.labels]

    def to_csv(self, path) -> None:
        write_csv(path, self.header(), np.column_stack([self.times, self.values]))


def integrate(params: ModelParams, x0, dt: float, steps: int, normals, *,
              store_cols=None, store_every: int = 1, t0: float = 0.0):
    """Euler-Maruyama from a (2n+1, s_bar) state with caller-supplied noise.

    ``normals`` is either an array of shape (steps, N) of standard normals or
    an object with a ``next()`` method returning one row per step. Returns
    (stored times, stored values, final state).
    """
    plan = _Plan.build(params)
    x = np.array(x0, dtype=float)
    shape = x.shape
    flat_cols = np.arange(x.size) if store_cols is None else np.asarray(store_cols, dtype=np.intp)
    n_store = steps // store_every + 1
    times = np.empty(n_store)
    out = np.empty((n_store, flat_cols.size))
    times[0], out[0] = t0, x.ravel()[flat_cols]
    noise_scale = plan.sigma * math.sqrt(dt)
    const_input = _constant_input(params)
    draw = normals.next if hasattr(normals, "next") else iter(np.asarray(normals)).__next__
    row = 1
    for k in range(steps):
        t = t0 + k * dt
        drift = network_drift(params, x, t, plan, const_input)
        x = x + drift * dt + noise_scale * draw().reshape(shape)
        _check(x, k + 1, t + dt)
        if (k + 1) % store_every == 0:
            times[row] = t0 + (k + 1) * dt
            out[row] = x.ravel()[flat_cols]
            row += 1
    return times, out, x


def _constant_input(params):
    if all(isinstance(inp, ConstantInput) for inp in params.inputs):
        return params.input_vector(0.0)[params.slot_population]
    return None


def simulate(params: ModelParams, n: int, run, *, store_groups=None, store_every: int = 1,
             digest_groups=(), substeps: int = 1) -> PathEnsemble:
    """Simulate the network on [0, run.T] with noise keyed by neuron label.

    ``store_groups`` limits which groups are kept (all by default);
    ``digest_groups`` lists groups whose consumed noise is fingerprinted in
    ``noise_digests``.
    """
    layout: Layout = params.layout(n)
    steps = num_steps(run.T, run.dt)
    stream = NoiseStream(run.seed)
    keys = [astuple(layout.unflatten(k)) for k in range(layout.size)]
    digest_keys = [k for k in keys if k[0] in set(digest_groups)]
    source = stream.increments(keys, digest_keys, substeps)
    x0 = NetworkState.initial(params, n, stream).grid(params)

    groups = range(-n, n + 1) if store_groups is None else store_groups
    cols = np.concatenate([np.arange(layout.size)[layout.group_slots(g)] for g in groups])
    times, values, _ = integrate(params, x0, run.dt, steps, source,
                                 store_cols=cols, store_every=store_every)
    return PathEnsemble(
        times=times,
        values=values,
        labels=[keys[c] for c in cols],
        meta={"kind": "network", "n": n, "seed": run.seed, "dt": run.dt, "T": run.T},
        noise_digests=source.digests(),
    )


# -- numerical diagnostics ----------------------------------------------------


def strong_error_study(params: ModelParams, n: int, T: float, dts, ref_dt: float, seeds, run):
    """Strong self-convergence of Euler-Maruyama on shared Brownian paths.

    For each seed the reference run uses ``ref_dt``; a run at step dt sums
    dt / ref_dt of the same draws per increment, so every run sees one
    Brownian path. The error at dt is the seed-average of max |X_dt(T) -
    X_ref(T)|. Returns (fitted order, errors).
    """
    errors = np.zeros(len(dts))
    for seed in seeds:
        base = run.replace(T=T, dt=ref_dt, seed=seed)
        ref = simulate(params, n, base, store_every=num_steps(T, ref_dt)).values[-1]
        for i, dt in enumerate(dts):
            r = dt / ref_dt
            if abs(r - round(r)) > 1e-9:
                raise ValueError("every dt must be an integer multiple of ref_dt")
            coarse = run.replace(T=T, dt=dt, seed=seed)
            x = simulate(params, n, coarse, store_every=num_steps(T, dt), substeps=round(r))
            errors[i] += np.max(np.abs(x.values[-1] - ref))
    errors /= len(list(seeds))
    order = float(np.polyfit(np.log(dts), np.log(errors), 1)[0])
    return order, errors


def step_cost(params: ModelParams, n: int, steps: int = 100, repeats: int = 5,
              dt: float = 1e-3) -> float:
    """Best-of-``repeats`` wall time per Euler-Maruyama step (noise pre-drawn)."""
    layout = params.layout(n)
    x0 = NetworkState.initial(params, n).grid(params)
    normals = np.random.default_rng(0).standard_normal((steps, layout.size))
    best = math.inf
    for _ in range(repeats):
        start = time.perf_counter()
        integrate(params, x0, dt, steps, normals, store_cols=[], store_every=steps)
        best = min(best, time.perf_counter() - start)
    return best / steps
