"""Gaussian moments of the sigmoid, E[S(Y)] and E[Y S(Y)] for Y ~ N(mean, variance).

Both moments are computed with Gauss-Hermite quadrature after the change of
variables y = mean + sqrt(2 variance) u. For the logistic sigmoid the nearest
complex poles (at y = i pi (2k+1)) are subtracted first and their Gaussian
expectations added back in closed form through the Faddeeva function; the
remainder is analytic in a much wider strip, which keeps the quadrature at
machine precision even for variances of order 10.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy.special import wofz

from .model import DomainError, LogisticSigmoid, SigmoidSpec

DEFAULT_ORDER = 64
DEGENERATE_VARIANCE = 1e-14
_POLE_PAIRS = 3
_POLES = 1j * math.pi * (2 * np.arange(_POLE_PAIRS) + 1)
_POLE_IM2 = (_POLES.imag) ** 2
_SQRT_PI = math.sqrt(math.pi)


@dataclass(frozen=True)
class GaussianParams:
    mean: float
    variance: float

    def __post_init__(self):
        if not (math.isfinite(self.mean) and math.isfinite(self.variance)):
            raise DomainError("Gaussian parameters must be finite")
        if self.variance < 0:
            raise DomainError(f"variance must be >= 0, got {self.variance}")


@lru_cache(maxsize=None)
def _hermgauss(order: int):
    x, w = np.polynomial.hermite.hermgauss(order)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Hermite rule for the weight exp(-u^2)."""

    order: int = DEFAULT_ORDER
    nodes: np.ndarray = field(init=False, repr=False, compare=False)
    weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.order) < 2:
            raise ValueError("quadrature order must be >= 2")
        x, w = _hermgauss(int(self.order))
        object.__setattr__(self, "order", int(self.order))
        object.__setattr__(self, "nodes", x)
        object.__setattr__(self, "weights", w)


DEFAULT_RULE = QuadratureRule()


def _pole_expectations(mean, scale):
    """E[1/(Y - a_k)] for the upper-half-plane poles a_k; shape (..., K)."""
    z = (_POLES - mean[..., None]) / scale[..., None]
    return 1j * _SQRT_PI * wofz(z) / scale[..., None]


def gaussian_sigmoid_moments(mean, variance, spec: SigmoidSpec = LogisticSigmoid(),
                             rule: QuadratureRule = DEFAULT_RULE):
    """Vectorised (E[S(Y)], E[Y S(Y)]) over broadcast arrays of mean and variance.

    Entries with variance below the degenerate threshold return S(mean) and
    mean * S(mean) exactly.
    """
    mean, variance = np.broadcast_arrays(np.asarray(mean, dtype=float),
                                         np.asarray(variance, dtype=float))
    if np.any(variance < 0):
        raise DomainError("variance must be >= 0")
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(variance))):
        raise DomainError("Gaussian parameters must be finite")
    return _moments(mean, variance, spec, rule)


def _moments(mean, variance, spec, rule):
    # no validation: called from the ODE right-hand side
    degenerate = variance < DEGENERATE_VARIANCE
    if degenerate.all():
        s_deg = spec(mean)
        return s_deg, mean * s_deg

    scale = np.sqrt(2.0 * np.where(degenerate, 1.0, variance))
    y = mean[..., None] + scale[..., None] * rule.nodes
    w = rule.weights / _SQRT_PI
    sy = spec(y)

    if isinstance(spec, LogisticSigmoid):
        # 1/(y - ic) + 1/(y + ic) = 2y / (y^2 + c^2)
        y2 = y * y
        g = 1.0 / (y2 + _POLE_IM2[0])
        for c2 in _POLE_IM2[1:]:
            g += 1.0 / (y2 + c2)
        pole_s = 2.0 * y * g
        e_inv = _pole_expectations(mean, scale)
        s = (sy - pole_s) @ w + 2.0 * e_inv.real.sum(-1)
        xs = (y * (sy - pole_s)) @ w + 2.0 * (1.0 + _POLES * e_inv).real.sum(-1)
    else:
        s = sy @ w
        xs = (y * sy) @ w

    if degenerate.any():
        s_deg = spec(mean)
        s = np.where(degenerate, s_deg, s)
        xs = np.where(degenerate, mean * s_deg, xs)
    return s, xs


def s_moment(g: GaussianParams, spec: SigmoidSpec = LogisticSigmoid(),
             rule: QuadratureRule = DEFAULT_RULE) -> float:
    """E[S(Y)] for Y ~ N(g.mean, g.variance)."""
    s, _ = gaussian_sigmoid_moments(g.mean, g.variance, spec, rule)
    return float(s)


def xs_moment(g: GaussianParams, spec: SigmoidSpec = LogisticSigmoid(),
              rule: QuadratureRule = DEFAULT_RULE) -> float:
    """E[Y S(Y)] for Y ~ N(g.mean, g.variance)."""
    _, xs = gaussian_sigmoid_moments(g.mean, g.variance, spec, rule)
    return float(xs)


@dataclass(frozen=True)
class LipschitzFit:
    s: float
    xs: float
    pairs: int


def moment_lipschitz_bound(points, spec: SigmoidSpec = LogisticSigmoid(),
                           rule: QuadratureRule = DEFAULT_RULE) -> LipschitzFit:
    """Largest ratio |moment(a) - moment(b)| / (|dvar| + |dmean|) over pairs.

    ``points`` is either a sequence of GaussianParams (all pairs are used) or
    a sequence of (GaussianParams, GaussianParams) pairs. Coincident pairs are
    skipped; a ValueError is raised if nothing is left.
    """
    points = list(points)
    if points and isinstance(points[0], GaussianParams):
        pairs = list(combinations(points, 2))
    else:
        pairs = points
    if not pairs:
        raise ValueError("no pairs given")
    a = np.array([[p.mean, p.variance] for p, _ in pairs])
    b = np.array([[q.mean, q.variance] for _, q in pairs])
    if np.any(a[:, 1] <= 0) or np.any(b[:, 1] <= 0):
        raise ValueError("variances must be > 0")
    return _lipschitz_from_arrays(a, b, spec, rule)


def _lipschitz_from_arrays(a, b, spec, rule) -> LipschitzFit:
    denom = np.abs(a[:, 0] - b[:, 0]) + np.abs(a[:, 1] - b[:, 1])
    keep = denom > 0
    if not np.any(keep):
        raise ValueError("all pairs are coincident")
    sa, xa = gaussian_sigmoid_moments(a[keep, 0], a[keep, 1], spec, rule)
    sb, xb = gaussian_sigmoid_moments(b[keep, 0], b[keep, 1], spec, rule)
    d = denom[keep]
    return LipschitzFit(
        s=float(np.max(np.abs(sa - sb) / d)),
        xs=float(np.max(np.abs(xa - xb) / d)),
        pairs=int(keep.sum()),
    )


def lattice_lipschitz_bound(mean_range, var_range, num, spec: SigmoidSpec = LogisticSigmoid(),
                            rule: QuadratureRule = DEFAULT_RULE) -> LipschitzFit:
    """moment_lipschitz_bound over all pairs of a num x num (mean, variance) lattice."""
    m = np.linspace(*mean_range, num)
    v = np.linspace(*var_range, num)
    if v[0] <= 0:
        raise ValueError("variances must be > 0")
    mm, vv = np.meshgrid(m, v, indexing="ij")
    pts = np.column_stack([mm.ravel(), vv.ravel()])
    s, xs = gaussian_sigmoid_moments(pts[:, 0], pts[:, 1], spec, rule)
    i, j = np.triu_indices(len(pts), k=1)
    denom = np.abs(pts[i, 0] - pts[j, 0]) + np.abs(pts[i, 1] - pts[j, 1])
    return LipschitzFit(
        s=float(np.max(np.abs(s[i] - s[j]) / denom)),
        xs=float(np.max(np.abs(xs[i] - xs[j]) / denom)),
        pairs=int(len(i)),
    )
