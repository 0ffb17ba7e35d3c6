"""Mean/variance ODE system of the Gaussian mean-field limit.

For each population alpha the limit law has mean m^alpha(t) and variance
q^alpha(t) (cross-covariances vanish), and

    dm/dt = Fbar m + fbar,      dq/dt = 2 Fbar q + sigma^2,

with Fbar = -1/tau + sum_beta (2 s_beta + 1) J[alpha, beta] E[S(Y_beta)] and
fbar = I(t) - sum_beta (2 s_beta + 1) J[alpha, beta] E[Y_beta S(Y_beta)],
Y_beta ~ N(m^beta, q^beta).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .model import ConstantInput, ModelParams
from .moments import DEFAULT_RULE, QuadratureRule, _moments, gaussian_sigmoid_moments

CLAMP_EPS = 1e-12


class IntegrationError(RuntimeError):
    """Numerical failure during time stepping; carries the step index."""

    def __init__(self, message: str, step: int, t: float | None = None):
        super().__init__(f"{message} (step {step}" + (f", t={t:.6g})" if t is not None else ")"))
        self.step = step
        self.t = t


@dataclass(frozen=True)
class MeanFieldState:
    m: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=float).ravel()
        q = np.array(self.q, dtype=float).ravel()
        if m.shape != q.shape:
            raise ValueError("m and q must have the same length")
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(q))):
            raise ValueError("state must be finite")
        if np.any(q < 0):
            raise ValueError("variances must be >= 0")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "q", q)

    @classmethod
    def initial(cls, params: ModelParams) -> "MeanFieldState":
        return cls(params.x_ini, params.q_ini)


def coefficients(params: ModelParams, t, m, q, rule: QuadratureRule = DEFAULT_RULE):
    """(Fbar, fbar) for states m, q of shape (..., P) at times t of shape (...)."""
    m = np.asarray(m, dtype=float)
    q = np.asarray(q, dtype=float)
    s, xs = gaussian_sigmoid_moments(m, q, params.sigmoid, rule)
    w = params.coupling * params.multiplicity  # J[a, b] (2 s_b + 1)
    F = -1.0 / params.tau + s @ w.T
    f = params.input_vector(t) - xs @ w.T
    return F, f


def f_bar_coeff(params: ModelParams, state: MeanFieldState, alpha: int,
                rule: QuadratureRule = DEFAULT_RULE) -> float:
    """Fbar for the 0-based population ``alpha``."""
    F, _ = coefficients(params, 0.0, state.m, state.q, rule)
    return float(F[alpha])


def f_bar_forcing(params: ModelParams, t: float, state: MeanFieldState, alpha: int,
                  rule: QuadratureRule = DEFAULT_RULE) -> float:
    """fbar at time t for the 0-based population ``alpha``."""
    _, f = coefficients(params, t, state.m, state.q, rule)
    return float(f[alpha])


def rhs(params: ModelParams, t: float, state: MeanFieldState,
        rule: QuadratureRule = DEFAULT_RULE) -> MeanFieldState:
    """Time derivative (dm/dt, dq/dt), returned as a (m, q)-shaped state.

    The derivative of q can be negative, so the return value is built
    without the variance check.
    """
    F, f = coefficients(params, t, state.m, state.q, rule)
    dm, dq = F * state.m + f, 2.0 * F * state.q + params.sigma**2
    out = object.__new__(MeanFieldState)
    object.__setattr__(out, "m", dm)
    object.__setattr__(out, "q", dq)
    return out


class _Field:
    """Right-hand side with the parameter-only pieces precomputed."""

    def __init__(self, params: ModelParams, rule: QuadratureRule):
        self.wT = np.ascontiguousarray((params.coupling * params.multiplicity).T)
        self.decay = -1.0 / params.tau
        self.sigma2 = params.sigma**2
        self.sigmoid = params.sigmoid
        self.rule = rule
        self.params = params
        const = all(isinstance(inp, ConstantInput) for inp in params.inputs)
        self.input = params.input_vector(0.0) if const else None

    def __call__(self, t, m, q):
        s, xs = _moments(m, q, self.sigmoid, self.rule)
        F = self.decay + s @ self.wT
        I = self.input if self.input is not None else self.params.input_vector(t)
        return F * m + I - xs @ self.wT, 2.0 * F * q + self.sigma2


def num_steps(T: float, dt: float) -> int:
    if not (dt > 0 and T >= 0):
        raise ValueError("need dt > 0 and T >= 0")
    k = round(T / dt)
    if abs(k * dt - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of dt={dt}")
    return int(k)


@dataclass(frozen=True, eq=False)
class MeanFieldSolution:
    """RK4 solution on a uniform grid; dense output by linear interpolation."""

    params: ModelParams
    times: np.ndarray
    m: np.ndarray
    q: np.ndarray
    rule: QuadratureRule = DEFAULT_RULE

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0]) if len(self.times) > 1 else 0.0

    def _check_time(self, t):
        t = np.asarray(t, dtype=float)
        tol = 1e-12 * max(1.0, self.T)
        if np.any(t < -tol) or np.any(t > self.T + tol):
            raise ValueError(f"t outside [0, {self.T}]")
        return np.clip(t, 0.0, self.T)

    def state_arrays(self, t):
        """Interpolated (m, q) at time(s) t."""
        t = self._check_time(t)
        m = np.stack([np.interp(t, self.times, self.m[:, a]) for a in range(self.m.shape[1])], -1)
        q = np.stack([np.interp(t, self.times, self.q[:, a]) for a in range(self.q.shape[1])], -1)
        return m, q

    def state_at(self, t: float) -> MeanFieldState:
        m, q = self.state_arrays(float(t))
        return MeanFieldState(m, q)

    def coefficients_on_grid(self):
        """(Fbar, fbar) at every grid time, each of shape (len(times), P)."""
        return coefficients(self.params, self.times, self.m, self.q, self.rule)

    def to_csv(self, path) -> None:
        P = self.m.shape[1]
        header = ["t"] + [f"m_{a}" for a in range(1, P + 1)] + [f"q_{a}" for a in range(1, P + 1)]
        write_csv(path, header, np.column_stack([self.times, self.m, self.q]))


def coefficients_at(solution: MeanFieldSolution, t: float):
    """(Fbar, fbar) per population at the interpolated state at time t."""
    m, q = solution.state_arrays(float(t))
    F, f = coefficients(solution.params, float(t), m, q, solution.rule)
    return F, f


def solve(params: ModelParams, T: float, dt: float,
          rule: QuadratureRule = DEFAULT_RULE) -> MeanFieldSolution:
    """Classical fixed-step RK4 from (x_ini, q_ini) on [0, T]."""
    n = num_steps(T, dt)
    P = params.num_populations
    times = np.arange(n + 1) * dt
    m = np.empty((n + 1, P))
    q = np.empty((n + 1, P))
    m[0] = params.x_ini
    q[0] = params.q_ini
    mk, qk = m[0].copy(), q[0].copy()
    half = 0.5 * dt
    field = _Field(params, rule)
    for k in range(n):
        t = times[k]
        # intermediate stages may undershoot zero variance by rounding
        dm1, dq1 = field(t, mk, qk)
        dm2, dq2 = field(t + half, mk + half * dm1, np.maximum(qk + half * dq1, 0.0))
        dm3, dq3 = field(t + half, mk + half * dm2, np.maximum(qk + half * dq2, 0.0))
        dm4, dq4 = field(t + dt, mk + dt * dm3, np.maximum(qk + dt * dq3, 0.0))
        mk = mk + dt / 6.0 * (dm1 + 2.0 * dm2 + 2.0 * dm3 + dm4)
        qk = qk + dt / 6.0 * (dq1 + 2.0 * dq2 + 2.0 * dq3 + dq4)
        if not np.isfinite(mk.sum() + qk.sum()):
            raise IntegrationError("non-finite mean-field state", k + 1, times[k + 1])
        if qk.min() < -CLAMP_EPS:
            raise IntegrationError("negative variance beyond clamp tolerance", k + 1, times[k + 1])
        qk = np.maximum(qk, 0.0)
        m[k + 1] = mk
        q[k + 1] = qk
    for arr in (times, m, q):
        arr.setflags(write=False)
    return MeanFieldSolution(params, times, m, q, rule)


def write_csv(path, header, rows) -> None:
    """CSV with 17 significant digits so values round-trip exactly."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format(float(v), ".17g") for v in row])


def read_csv(path):
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[float(v) for v in row] for row in r]
    return header, np.array(rows).reshape(len(rows), len(header))


def ou_closed_form(params: ModelParams, t):
    """Mean and variance of the uncoupled (J = 0) system with constant input."""
    t = np.asarray(t, dtype=float)[..., None]
    I = params.input_vector(0.0)
    tau = params.tau
    m = I * tau + (params.x_ini - I * tau) * np.exp(-t / tau)
    q = params.sigma**2 * tau / 2.0 * (1.0 - np.exp(-2.0 * t / tau)) + params.q_ini * np.exp(-2.0 * t / tau)
    return m, q


def gronwall_envelope(params: ModelParams, T: float) -> float:
    """Bound on sup_t (|m(t)| + |q(t)|) on [0, T] from the linear-growth estimates.

    |Fbar| <= 1/tau + J_max s_bar and |fbar| <= sup|I| + s_bar J_max (|m| + |q| + 1)
    with |E[Y S(Y)]| <= |m| + sqrt(q) <= |m| + q + 1, so u = |m| + |q| obeys
    du/dt <= A (u + 1) and u(t) + 1 <= (u(0) + 1) e^{A t}.
    """
    b = 1.0 / params.tau + params.j_max * params.s_bar
    i_sup = max(_input_sup(inp, T) for inp in params.inputs)
    A = 2.0 * b + params.s_bar * params.j_max + i_sup + params.sigma_max**2
    u0 = float(np.max(np.abs(params.x_ini)) + np.max(params.q_ini))
    return (u0 + 1.0) * math.exp(A * T) - 1.0


def _input_sup(inp, T):
    grid = np.linspace(0.0, T, 1001)
    vals = np.abs(np.asarray(inp(grid), dtype=float))
    if hasattr(inp, "values"):
        vals = np.concatenate([vals, np.abs(inp.values)])
    return float(np.max(vals))
