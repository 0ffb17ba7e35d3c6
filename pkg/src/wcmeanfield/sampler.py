"""Monte-Carlo sampling of the mean-field limit process.

Given the solved mean/variance ODE, the limit process is the linear SDE

    dX = (Fbar(t) X + fbar(t)) dt + sigma dW,

whose coefficients are frozen functions of time. Paths are integrated with
Euler-Maruyama on the same grid (and with the same noise keys) as the
network simulator, so a mean-field path can be driven by exactly the
Brownian increments of a chosen network group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .meanfield import MeanFieldSolution, coefficients, num_steps
from .network import BLOWUP_THRESHOLD, BlowUpError, PathEnsemble
from .noise import NoiseStream


@dataclass(frozen=True)
class MarginalLaw:
    """Gaussian marginal of the limit law at one time, one entry per (alpha, p) slot."""

    t: float
    labels: list
    mean: np.ndarray
    variance: np.ndarray

    def covariance(self) -> np.ndarray:
        # distinct slots are uncorrelated in the limit
        return np.diag(self.variance)


def marginal_law(solution: MeanFieldSolution, t: float) -> MarginalLaw:
    m, q = solution.state_arrays(float(t))
    params = solution.params
    pop = params.slot_population
    labels = params.layout(0).slot_labels()
    return MarginalLaw(float(t), labels, m[pop], q[pop])


def integrate_linear(F, f, sigma, x0, dt: float, normals, *, columns=None,
                     store_every: int = 1):
    """Euler-Maruyama for dX = (F_k X + f_k) dt + sigma dW on a uniform grid.

    ``F`` and ``f`` have one row per grid time (``steps + 1`` rows). Without
    ``columns`` each row must broadcast against ``x0``; with ``columns``,
    coordinate c uses column ``columns[c]`` of F and f. ``x0`` is the flat
    initial vector. ``normals`` is an array (steps, len(x0)) or an
    object with ``next()``. Returns (stored step indices, stored values,
    running sup of |X| per coordinate).
    """
    F = np.asarray(F, dtype=float)
    f = np.asarray(f, dtype=float)
    x = np.array(x0, dtype=float)
    steps = F.shape[0] - 1
    noise = np.asarray(sigma, dtype=float) * math.sqrt(dt)
    draw = normals.next if hasattr(normals, "next") else iter(np.asarray(normals)).__next__
    idx = np.arange(0, steps + 1, store_every)
    out = np.empty((idx.size, x.size))
    out[0] = x
    sup = np.abs(x)
    row = 1
    for k in range(steps):
        Fk, fk = (F[k], f[k]) if columns is None else (F[k][columns], f[k][columns])
        x = x + (Fk * x + fk) * dt + noise * draw()
        ax = np.abs(x)
        peak = ax.max()
        if not peak <= BLOWUP_THRESHOLD:
            raise BlowUpError(f"mean-field path blew up (max |X| = {peak:.3g})", k + 1, (k + 1) * dt)
        np.maximum(sup, ax, out=sup)
        if (k + 1) % store_every == 0:
            out[row] = x
            row += 1
    return idx, out, sup


def grid_coefficients(solution: MeanFieldSolution, dt: float, steps: int):
    """(Fbar, fbar) at t_k = k dt, k = 0..steps, shape (steps + 1, P)."""
    if steps * dt > solution.T * (1 + 1e-12) + 1e-12:
        raise ValueError("mean-field solution does not cover the requested horizon")
    if len(solution.times) > 1 and math.isclose(solution.dt, dt, rel_tol=1e-12):
        F, f = solution.coefficients_on_grid()
        return F[: steps + 1], f[: steps + 1]
    t = np.arange(steps + 1) * dt
    m, q = solution.state_arrays(t)
    return coefficients(solution.params, t, m, q, solution.rule)


def sample_paths(solution: MeanFieldSolution, count: int, run, *, groups=None,
                 store_every: int = 1, digest_groups=(), substeps: int = 1) -> PathEnsemble:
    """Sample ``count`` mean-field paths on [0, run.T] with step run.dt.

    Path k uses the noise streams of group label ``groups[k]`` (default k),
    so passing the label of a network group reuses that group's Brownian
    increments.
    """
    params = solution.params
    if count < 1:
        raise ValueError("count must be >= 1")
    labels_g = list(range(count)) if groups is None else list(groups)
    if len(labels_g) != count:
        raise ValueError("groups must have one label per path")
    steps = num_steps(run.T, run.dt)
    F, f = grid_coefficients(solution, run.dt, steps)

    slots = params.layout(0).slot_labels()
    pop = params.slot_population
    keys = [(g, a, p) for g in labels_g for a, p in slots]
    col_pop = np.tile(pop, count)
    stream = NoiseStream(run.seed)
    x0 = stream.initial_values(keys, params.x_ini[col_pop], params.q_ini[col_pop])
    digest_keys = [k for k in keys if k[0] in set(digest_groups)]
    source = stream.increments(keys, digest_keys, substeps)

    idx, values, sup = integrate_linear(
        F, f, params.sigma[col_pop], x0, run.dt, source,
        columns=col_pop, store_every=store_every,
    )
    return PathEnsemble(
        times=idx * run.dt,
        values=values,
        labels=keys,
        meta={"kind": "meanfield", "count": count, "seed": run.seed, "dt": run.dt, "T": run.T},
        noise_digests=source.digests(),
        sup_norm=sup.reshape(count, len(slots)).max(axis=1),
    )


def population_columns(ensemble: PathEnsemble, population: int, slot: int | None = None):
    """Column indices of a 1-based population (optionally a single slot)."""
    return [
        c for c, (_, a, p) in enumerate(ensemble.labels)
        if a == population and (slot is None or p == slot)
    ]


def ensemble_summary(ensemble: PathEnsemble, solution: MeanFieldSolution) -> dict:
    """Per-stored-time empirical mean/variance per population next to the ODE values."""
    P = solution.params.num_populations
    m, q = solution.state_arrays(ensemble.times)
    rows = []
    for k, t in enumerate(ensemble.times):
        row = {"t": float(t)}
        for a in range(1, P + 1):
            vals = ensemble.values[k, population_columns(ensemble, a)]
            row[f"mean_{a}"] = float(vals.mean())
            row[f"var_{a}"] = float(vals.var(ddof=1)) if vals.size > 1 else 0.0
            row[f"ode_m_{a}"] = float(m[k, a - 1])
            row[f"ode_q_{a}"] = float(q[k, a - 1])
        rows.append(row)
    return {"rows": rows}
