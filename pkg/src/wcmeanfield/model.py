"""Model parameterization: populations, neuron indexing, sigmoids and input currents."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import expit


class DomainError(ValueError):
    """Raised when a function is evaluated outside its domain."""


class ValidationError(ValueError):
    """Raised when model parameters violate a structural invariant."""


# grid on which the sigmoid growth constants are measured
_BOUND_GRID = np.linspace(-50.0, 50.0, 200_001)


def _check_finite(x):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"sigmoid argument must be finite, got {x!r}")
    return arr


@dataclass(frozen=True)
class LogisticSigmoid:
    """S(x) = 1 / (1 + exp(-x))."""

    kind = "logistic"

    def __call__(self, x):
        # expit evaluates exp(x)/(1+exp(x)) for x < 0, so it never overflows
        return expit(x)

    def derivative(self, x):
        s = self(x)
        return s * (1.0 - s)

    def second_derivative(self, x):
        s = self(x)
        return s * (1.0 - s) * (1.0 - 2.0 * s)

    def to_dict(self) -> dict:
        return {"kind": "logistic"}


@dataclass(frozen=True)
class TabulatedSigmoid:
    """Monotone sigmoid given by a table of (x, S(x)) values.

    Interpolation is shape-preserving cubic (PCHIP) and the value is held
    constant outside the table, so x*S'' stays bounded.
    """

    x: tuple
    y: tuple
    _interp: PchipInterpolator = field(init=False, repr=False, compare=False)

    kind = "tabulated"

    def __post_init__(self):
        xs = np.asarray(self.x, dtype=float)
        ys = np.asarray(self.y, dtype=float)
        if xs.ndim != 1 or xs.shape != ys.shape or xs.size < 2:
            raise ValidationError("tabulated sigmoid needs matching x/y tables of length >= 2")
        if np.any(np.diff(xs) <= 0):
            raise ValidationError("tabulated sigmoid x values must be strictly increasing")
        if np.any(np.diff(ys) <= 0):
            raise ValidationError("tabulated sigmoid must be strictly increasing")
        if ys[0] <= 0.0 or ys[-1] >= 1.0:
            raise ValidationError("tabulated sigmoid values must lie in (0, 1)")
        object.__setattr__(self, "x", tuple(xs.tolist()))
        object.__setattr__(self, "y", tuple(ys.tolist()))
        object.__setattr__(self, "_interp", PchipInterpolator(xs, ys, extrapolate=False))

    def _clip(self, x):
        return np.clip(np.asarray(x, dtype=float), self.x[0], self.x[-1])

    def _inside(self, x):
        x = np.asarray(x, dtype=float)
        return (x >= self.x[0]) & (x <= self.x[-1])

    def __call__(self, x):
        return self._interp(self._clip(x))

    def derivative(self, x):
        return np.where(self._inside(x), self._interp(self._clip(x), 1), 0.0)

    def second_derivative(self, x):
        return np.where(self._inside(x), self._interp(self._clip(x), 2), 0.0)

    def to_dict(self) -> dict:
        return {"kind": "tabulated", "x": list(self.x), "y": list(self.y)}


SigmoidSpec = Union[LogisticSigmoid, TabulatedSigmoid]


@dataclass(frozen=True)
class SigmoidBounds:
    """Growth constants of a sigmoid measured on x in [-50, 50]."""

    cs: float
    """sup |x S'(x)|"""
    x2_second: float
    """sup |x S''(x)|"""
    xs_lipschitz: float
    """sup |d/dx (x S(x))| = sup |x S'(x) + S(x)|"""


def sigmoid_bounds(spec: SigmoidSpec) -> SigmoidBounds:
    x = _BOUND_GRID
    d1 = spec.derivative(x)
    return SigmoidBounds(
        cs=float(np.max(np.abs(x * d1))),
        x2_second=float(np.max(np.abs(x * spec.second_derivative(x)))),
        xs_lipschitz=float(np.max(np.abs(x * d1 + spec(x)))),
    )


def sigmoid_from_dict(data: dict) -> SigmoidSpec:
    kind = data.get("kind", "logistic")
    if kind == "logistic":
        return LogisticSigmoid()
    if kind == "tabulated":
        return TabulatedSigmoid(tuple(data["x"]), tuple(data["y"]))
    raise ValidationError(f"unknown sigmoid kind {kind!r}")


def sigmoid_eval(spec: SigmoidSpec, x):
    """Evaluate S(x); raises DomainError for non-finite input."""
    arr = _check_finite(x)
    out = spec(arr)
    return float(out) if np.ndim(x) == 0 else out


def x_sigmoid_eval(spec: SigmoidSpec, x):
    """Evaluate x * S(x); raises DomainError for non-finite input."""
    arr = _check_finite(x)
    out = arr * spec(arr)
    return float(out) if np.ndim(x) == 0 else out


# -- input currents ---------------------------------------------------------


@dataclass(frozen=True)
class ConstantInput:
    value: float

    def __call__(self, t):
        return np.full(np.shape(t), float(self.value)) if np.ndim(t) else float(self.value)

    def to_json(self):
        return float(self.value)


@dataclass(frozen=True)
class TableInput:
    """Piecewise-linear current, clamped to the end values outside the table."""

    times: tuple
    values: tuple

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 1:
            raise ValidationError("input table needs matching time/value columns")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("input table times must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValidationError("input table values must be finite")
        object.__setattr__(self, "times", tuple(t.tolist()))
        object.__setattr__(self, "values", tuple(v.tolist()))

    def __call__(self, t):
        out = np.interp(t, self.times, self.values)
        return float(out) if np.ndim(t) == 0 else out

    def to_json(self):
        return {"table": [[a, b] for a, b in zip(self.times, self.values)]}


InputCurrent = Union[ConstantInput, TableInput]


def input_from_json(data) -> InputCurrent:
    if isinstance(data, dict):
        table = data["table"]
        return TableInput(tuple(r[0] for r in table), tuple(r[1] for r in table))
    return ConstantInput(float(data))


# -- neuron indexing --------------------------------------------------------


@dataclass(frozen=True, order=True)
class NeuronIndex:
    """Neuron label (i, alpha, p); ``population`` is 1-based as in the model."""

    group: int
    population: int
    slot: int

    @property
    def label(self) -> str:
        return f"{self.group}_{self.population}_{self.slot}"


@dataclass(frozen=True)
class Layout:
    """Bijection between neuron labels and flat array offsets.

    Offsets are group-major: all slots of group -n come first, then group
    -n+1, and so on. Within a group, populations are in order and slots run
    from -s_alpha to s_alpha.
    """

    n: int
    group_sizes: tuple

    def __post_init__(self):
        if self.n < 0:
            raise ValidationError("n must be >= 0")
        object.__setattr__(self, "group_sizes", tuple(int(s) for s in self.group_sizes))

    @property
    def s_bar(self) -> int:
        return sum(2 * s + 1 for s in self.group_sizes)

    @property
    def num_groups(self) -> int:
        return 2 * self.n + 1

    @property
    def size(self) -> int:
        return self.num_groups * self.s_bar

    def slot_offset(self, population: int, slot: int) -> int:
        """Offset of (alpha, p) inside one group."""
        if not 1 <= population <= len(self.group_sizes):
            raise IndexError(f"population {population} out of range")
        s = self.group_sizes[population - 1]
        if not -s <= slot <= s:
            raise IndexError(f"slot {slot} out of range for population {population}")
        base = sum(2 * g + 1 for g in self.group_sizes[: population - 1])
        return base + slot + s

    def flatten(self, idx: NeuronIndex) -> int:
        if not -self.n <= idx.group <= self.n:
            raise IndexError(f"group {idx.group} out of range")
        return (idx.group + self.n) * self.s_bar + self.slot_offset(idx.population, idx.slot)

    def unflatten(self, k: int) -> NeuronIndex:
        if not 0 <= k < self.size:
            raise IndexError(f"offset {k} out of range")
        g, r = divmod(k, self.s_bar)
        for alpha, s in enumerate(self.group_sizes, start=1):
            width = 2 * s + 1
            if r < width:
                return NeuronIndex(g - self.n, alpha, r - s)
            r -= width
        raise AssertionError("unreachable")

    def group_slots(self, group: int) -> slice:
        start = (group + self.n) * self.s_bar
        return slice(start, start + self.s_bar)

    def slot_labels(self):
        """(alpha, p) pairs in within-group order, alpha 1-based."""
        return [
            (alpha, p)
            for alpha, s in enumerate(self.group_sizes, start=1)
            for p in range(-s, s + 1)
        ]


# -- model parameters -------------------------------------------------------


def _frozen_array(values, ndim) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim != ndim:
        raise ValidationError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ModelParams:
    """Parameters of the multipopulation network.

    ``x_ini`` may be given per population or per (alpha, p) slot; in the
    latter case it must be constant within each population. ``q_ini`` is the
    initial variance per population (zero for a deterministic start).
    """

    group_sizes: tuple
    tau: float
    sigma: np.ndarray
    coupling: np.ndarray
    inputs: tuple
    x_ini: np.ndarray
    sigmoid: SigmoidSpec = field(default_factory=LogisticSigmoid)
    q_ini: np.ndarray | None = None

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.group_sizes)
        if not sizes:
            raise ValidationError("need at least one population")
        if any(s < 0 for s in sizes):
            raise ValidationError("group sizes must be >= 0")
        object.__setattr__(self, "group_sizes", sizes)
        P = len(sizes)

        if not (math.isfinite(self.tau) and self.tau > 0):
            raise ValidationError("tau must be positive")
        object.__setattr__(self, "tau", float(self.tau))

        sigma = _frozen_array(self.sigma, 1)
        if sigma.shape != (P,):
            raise ValidationError(f"sigma must have {P} entries")
        if not np.all(sigma > 0) or not np.all(np.isfinite(sigma)):
            raise ValidationError("all sigma must be finite and > 0")
        object.__setattr__(self, "sigma", sigma)

        coupling = _frozen_array(self.coupling, 2)
        if coupling.shape != (P, P):
            raise ValidationError(f"coupling must be {P}x{P}, got {coupling.shape}")
        if not np.all(np.isfinite(coupling)):
            raise ValidationError("coupling must be finite")
        object.__setattr__(self, "coupling", coupling)

        inputs = tuple(
            inp if isinstance(inp, (ConstantInput, TableInput)) else input_from_json(inp)
            for inp in self.inputs
        )
        if len(inputs) != P:
            raise ValidationError(f"need {P} input currents, got {len(inputs)}")
        object.__setattr__(self, "inputs", inputs)

        x_ini = np.array(self.x_ini, dtype=float).ravel()
        s_bar = sum(2 * s + 1 for s in sizes)
        if x_ini.size == P:
            x_pop = x_ini
        elif x_ini.size == s_bar:
            x_pop = np.empty(P)
            start = 0
            for a, s in enumerate(sizes):
                block = x_ini[start : start + 2 * s + 1]
                if np.any(block != block[0]):
                    raise ValidationError(
                        f"x_ini must be constant within population {a + 1}"
                    )
                x_pop[a] = block[0]
                start += 2 * s + 1
        else:
            raise ValidationError(f"x_ini must have {P} or {s_bar} entries")
        if not np.all(np.isfinite(x_pop)):
            raise ValidationError("x_ini must be finite")
        object.__setattr__(self, "x_ini", _frozen_array(x_pop, 1))

        q = np.zeros(P) if self.q_ini is None else np.array(self.q_ini, dtype=float).ravel()
        if q.shape != (P,) or np.any(q < 0) or not np.all(np.isfinite(q)):
            raise ValidationError(f"q_ini must have {P} finite entries >= 0")
        object.__setattr__(self, "q_ini", _frozen_array(q, 1))

        if isinstance(self.sigmoid, dict):
            object.__setattr__(self, "sigmoid", sigmoid_from_dict(self.sigmoid))
        object.__setattr__(self, "_bounds", None)

    # derived quantities

    @property
    def num_populations(self) -> int:
        return len(self.group_sizes)

    @property
    def s_bar(self) -> int:
        return sum(2 * s + 1 for s in self.group_sizes)

    @property
    def multiplicity(self) -> np.ndarray:
        """2 s_alpha + 1 per population."""
        return 2.0 * np.asarray(self.group_sizes, dtype=float) + 1.0

    @property
    def slot_population(self) -> np.ndarray:
        """0-based population index of each within-group slot."""
        return np.repeat(np.arange(self.num_populations), 2 * np.asarray(self.group_sizes) + 1)

    @property
    def j_max(self) -> float:
        return float(np.max(np.abs(self.coupling)))

    @property
    def sigma_min(self) -> float:
        return float(np.min(self.sigma))

    @property
    def sigma_max(self) -> float:
        return float(np.max(self.sigma))

    @property
    def bounds(self) -> SigmoidBounds:
        """Measured sigmoid growth constants (C_S and friends)."""
        if self._bounds is None:
            object.__setattr__(self, "_bounds", sigmoid_bounds(self.sigmoid))
        return self._bounds

    @property
    def cs(self) -> float:
        return self.bounds.cs

    def layout(self, n: int) -> Layout:
        return Layout(n, self.group_sizes)

    def input_vector(self, t) -> np.ndarray:
        """I^alpha(t) for all populations; with array t the result is (len(t), P)."""
        if np.ndim(t) == 0:
            return np.array([inp(float(t)) for inp in self.inputs])
        t = np.asarray(t, dtype=float)
        return np.stack([np.broadcast_to(inp(t), t.shape) for inp in self.inputs], axis=-1)

    def replace(self, **changes) -> "ModelParams":
        kwargs = dict(
            group_sizes=self.group_sizes,
            tau=self.tau,
            sigma=self.sigma,
            coupling=self.coupling,
            inputs=self.inputs,
            x_ini=self.x_ini,
            sigmoid=self.sigmoid,
            q_ini=self.q_ini,
        )
        kwargs.update(changes)
        return ModelParams(**kwargs)

    def to_dict(self) -> dict:
        return {
            "group_sizes": list(self.group_sizes),
            "tau": self.tau,
            "sigma": self.sigma.tolist(),
            "coupling": self.coupling.tolist(),
            "input": [inp.to_json() for inp in self.inputs],
            "x_ini": self.x_ini.tolist(),
            "q_ini": self.q_ini.tolist(),
            "sigmoid": self.sigmoid.to_dict(),
        }


def current_eval(params: ModelParams, population: int, t: float) -> float:
    """I^alpha(t) for the 0-based ``population``."""
    if not 0 <= population < params.num_populations:
        raise IndexError(f"population {population} out of range")
    return float(params.inputs[population](float(t)))


def reference_params(tau: float = 1.0) -> ModelParams:
    """Two-population excitatory/inhibitory example used throughout the docs.

    No decay constant is fixed for this example, so ``tau`` defaults to 1.
    """
    return ModelParams(
        group_sizes=(0, 0),
        tau=tau,
        sigma=(0.2, 0.2),
        coupling=((-0.11, -1.1), (0.44, -0.11)),
        inputs=(ConstantInput(0.2), ConstantInput(-0.2)),
        x_ini=(0.2, -0.35),
    )


def params_from_dict(data: dict) -> ModelParams:
    sizes = data["group_sizes"]
    if "num_populations" in data and data["num_populations"] != len(sizes):
        raise ValidationError("num_populations disagrees with group_sizes")
    return ModelParams(
        group_sizes=tuple(sizes),
        tau=data["tau"],
        sigma=data["sigma"],
        coupling=data["coupling"],
        inputs=tuple(input_from_json(v) for v in data["input"]),
        x_ini=data["x_ini"],
        sigmoid=sigmoid_from_dict(data.get("sigmoid", {"kind": "logistic"})),
        q_ini=data.get("q_ini"),
    )
