"""Reference processes ``X_t`` and potentials ``V_t``.

Two model families are provided:

* :class:`FiniteCtmcModel`, a time-inhomogeneous continuous-time Markov
  chain on ``{0, ..., K-1}`` sampled exactly by Poisson thinning against a
  declared bound ``rate_sup`` on the exit rates;
* :class:`TorusDiffusionModel`, a diffusion on the flat torus ``[0, 1)^d``
  discretised by Euler-Maruyama.  Paths are recorded as piecewise constant on
  the Euler grid, so everything built on top of it is approximate.

Model objects are immutable.  The callables they hold should be picklable
(module-level classes rather than lambdas) if replicas are to be fanned out
to worker processes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DegenerateSemigroupError, DomainError, ModelConsistencyError, ModelEvaluationError
from .paths import CadlagPath
from .rng import as_stream

RATE_TOL = 1e-12


# -- state spaces and initial laws -------------------------------------------


@dataclass(frozen=True)
class StateSpace:
    kind: str  # "finite" or "torus"
    size: int = 0
    dimension: int = 0

    def __post_init__(self):
        if self.kind == "finite":
            if self.size < 2:
                raise ValueError(f"finite state space needs size >= 2, got {self.size}")
        elif self.kind == "torus":
            if self.dimension < 1:
                raise ValueError(f"torus needs dimension >= 1, got {self.dimension}")
        else:
            raise ValueError(f"unknown state space kind {self.kind!r}")

    @classmethod
    def finite(cls, size: int) -> "StateSpace":
        return cls("finite", size=size)

    @classmethod
    def torus(cls, dimension: int) -> "StateSpace":
        return cls("torus", dimension=dimension)

    def contains(self, x) -> bool:
        if self.kind == "finite":
            return isinstance(x, (int, np.integer)) and 0 <= x < self.size
        return (isinstance(x, tuple) and len(x) == self.dimension
                and all(0.0 <= v < 1.0 for v in x))


@dataclass(frozen=True)
class InitialLaw:
    """Law of ``X_0``: ``dirac(state)``, ``categorical(weights)`` or ``uniform``."""

    kind: str
    state: object = None
    weights: tuple = ()

    def __post_init__(self):
        if self.kind == "categorical":
            w = np.asarray(self.weights, dtype=float)
            if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
                raise ValueError("categorical weights must be nonnegative and sum to 1")
            object.__setattr__(self, "weights", tuple(float(v) for v in w))
        elif self.kind == "dirac":
            if self.state is None:
                raise ValueError("dirac initial law needs a state")
        elif self.kind != "uniform":
            raise ValueError(f"unknown initial law {self.kind!r}")

    @classmethod
    def dirac(cls, state) -> "InitialLaw":
        return cls("dirac", state=state)

    @classmethod
    def categorical(cls, weights) -> "InitialLaw":
        return cls("categorical", weights=tuple(weights))

    @classmethod
    def uniform(cls) -> "InitialLaw":
        return cls("uniform")

    def vector(self, size: int) -> np.ndarray:
        """Probability vector on a finite space of the given size."""
        if self.kind == "dirac":
            v = np.zeros(size)
            v[self.state] = 1.0
            return v
        if self.kind == "uniform":
            return np.full(size, 1.0 / size)
        if len(self.weights) != size:
            raise ValueError(f"{len(self.weights)} weights for a space of size {size}")
        return np.asarray(self.weights, dtype=float)

    def sampler(self, space: StateSpace) -> Callable:
        """Return ``draw(stream) -> state``."""
        if self.kind == "dirac":
            x = self.state
            if space.kind == "torus":
                x = tuple(float(v) for v in x)
            return lambda stream: x
        if space.kind == "torus":
            if self.kind != "uniform":
                raise ValueError("torus models support dirac or uniform initial laws")
            d = space.dimension
            return lambda stream: tuple(stream.uniform() for _ in range(d))
        cum = np.cumsum(self.vector(space.size)).tolist()
        cum[-1] = 1.0
        last = space.size - 1

        def draw(stream):
            u = stream.uniform()
            for k, c in enumerate(cum):
                if u < c:
                    return k
            return last

        return draw


# -- built-in rate, potential and schedule callables -------------------------


@dataclass(frozen=True)
class ConstantRates:
    """Time-homogeneous rate matrix."""

    matrix: tuple

    def __call__(self, t: float) -> np.ndarray:
        return np.array(self.matrix, dtype=float)


@dataclass(frozen=True)
class ConstantVector:
    """``V_t(x) = values[x]``."""

    values: tuple

    def __call__(self, t: float, x) -> float:
        return self.values[x]


@dataclass(frozen=True)
class LinearInState:
    """``V_t(x) = intercept + slope * x``."""

    slope: float
    intercept: float = 0.0

    def __call__(self, t: float, x) -> float:
        return self.intercept + self.slope * x


@dataclass(frozen=True)
class LinearSchedule:
    """``beta_t = beta0 + rate * t``."""

    beta0: float = 0.0
    rate: float = 1.0

    def __call__(self, t: float) -> float:
        return self.beta0 + self.rate * t

    def derivative(self, t: float) -> float:
        return self.rate

    def derivative_sup(self, t_max: float) -> float:
        return abs(self.rate)


@dataclass(frozen=True)
class PowerSchedule:
    """``beta_t = beta0 + scale * t**power`` (power >= 1)."""

    beta0: float = 0.0
    scale: float = 1.0
    power: float = 2.0

    def __call__(self, t: float) -> float:
        return self.beta0 + self.scale * t ** self.power

    def derivative(self, t: float) -> float:
        return self.scale * self.power * t ** (self.power - 1.0)

    def derivative_sup(self, t_max: float) -> float:
        return abs(self.derivative(t_max))


@dataclass(frozen=True)
class JarzynskiPotential:
    """``V_t(x) = d/dt beta_t * H(x)``."""

    energies: tuple
    schedule: object

    def __call__(self, t: float, x) -> float:
        return self.schedule.derivative(t) * self.energies[x]


@dataclass(frozen=True)
class MetropolisRates:
    """Metropolis jump rates reversible w.r.t. ``pi_beta ~ exp(-beta_t H)``.

    From ``x`` each other state ``y`` is proposed at rate
    ``base_rate / (K - 1)`` and accepted with ``min(1, exp(-beta_t (H(y) - H(x))))``.
    """

    energies: tuple
    schedule: object
    base_rate: float = 1.0

    def __call__(self, t: float) -> np.ndarray:
        h = np.asarray(self.energies, dtype=float)
        k = h.size
        beta = self.schedule(t)
        dh = h[None, :] - h[:, None]
        q = self.base_rate / (k - 1) * np.minimum(1.0, np.exp(-beta * np.maximum(dh, 0.0)))
        np.fill_diagonal(q, 0.0)
        np.fill_diagonal(q, -q.sum(axis=1))
        return q


@dataclass(frozen=True)
class SineDrift:
    """``b(t, x)_k = -strength * sin(2 pi x_k)``."""

    strength: float = 1.0

    def __call__(self, t: float, x) -> np.ndarray:
        return -self.strength * np.sin(2.0 * np.pi * np.asarray(x))


@dataclass(frozen=True)
class CosinePotential:
    """``V(x) = amplitude * (1 + cos(2 pi x_1)) / 2`` with values in ``[0, amplitude]``."""

    amplitude: float = 1.0

    def __call__(self, t: float, x) -> float:
        return self.amplitude * 0.5 * (1.0 + math.cos(2.0 * math.pi * x[0]))


# -- models ------------------------------------------------------------------


@dataclass(frozen=True)
class FiniteCtmcModel:
    """Finite-state Markov chain with a bounded nonnegative potential.

    ``rates_time_homogeneous`` and ``potential_time_constant`` are promises
    made by the caller; they switch on cached tables and closed-form
    integrals.
    """

    size: int
    rate_matrix_fn: Callable
    potential_fn: Callable
    potential_sup: float
    rate_sup: float
    rates_time_homogeneous: bool = False
    potential_time_constant: bool = False
    name: str = "finite"
    _cache: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if self.size < 2:
            raise ValueError("finite model needs at least 2 states")
        if self.potential_sup < 0 or self.rate_sup < 0:
            raise ValueError("potential_sup and rate_sup must be nonnegative")

    @property
    def space(self) -> StateSpace:
        return StateSpace.finite(self.size)

    @classmethod
    def homogeneous(cls, rates, potential_values, *, name: str = "finite",
                    rate_sup: float | None = None) -> "FiniteCtmcModel":
        """Model with a constant generator and a constant potential vector."""
        q = np.asarray(rates, dtype=float)
        v = tuple(float(x) for x in potential_values)
        if q.shape != (len(v), len(v)):
            raise ValueError("rate matrix and potential vector sizes differ")
        exit_sup = float(np.max(-np.diag(q))) if rate_sup is None else float(rate_sup)
        return cls(
            size=len(v),
            rate_matrix_fn=ConstantRates(tuple(map(tuple, q.tolist()))),
            potential_fn=ConstantVector(v),
            potential_sup=max(v) if v else 0.0,
            rate_sup=exit_sup,
            rates_time_homogeneous=True,
            potential_time_constant=True,
            name=name,
        )

    def rate_matrix(self, t: float) -> np.ndarray:
        """Generator at time ``t``, checked for finiteness and structure."""
        if self.rates_time_homogeneous and "Q" in self._cache:
            return self._cache["Q"]
        q = np.asarray(self.rate_matrix_fn(t), dtype=float)
        if q.shape != (self.size, self.size) or not np.all(np.isfinite(q)):
            raise ModelEvaluationError(f"rate matrix at t={t} is malformed or non-finite")
        off = q - np.diag(np.diag(q))
        if np.any(off < -RATE_TOL) or np.any(np.abs(q.sum(axis=1)) > 1e-9 * max(1.0, np.abs(q).max())):
            raise ModelEvaluationError(f"rate matrix at t={t} is not a generator")
        if np.any(-np.diag(q) > self.rate_sup * (1 + 1e-12) + RATE_TOL):
            raise ModelEvaluationError(f"exit rate exceeds rate_sup={self.rate_sup} at t={t}")
        if self.rates_time_homogeneous:
            q.setflags(write=False)
            self._cache["Q"] = q
        return q

    def potential(self, t: float, x) -> float:
        v = float(self.potential_fn(t, x))
        if not (0.0 <= v <= self.potential_sup * (1 + 1e-12)):
            raise ModelEvaluationError(
                f"V_{t}({x}) = {v} outside [0, potential_sup={self.potential_sup}]")
        return v

    def potential_vector(self, t: float) -> np.ndarray:
        if self.potential_time_constant and "V" in self._cache:
            return self._cache["V"]
        v = np.array([self.potential(t, x) for x in range(self.size)])
        if self.potential_time_constant:
            v.setflags(write=False)
            self._cache["V"] = v
        return v

    def jump_table(self, t: float):
        """``(exit_rates, destinations, cumulative_rates)`` as Python lists."""
        if self.rates_time_homogeneous and "table" in self._cache:
            return self._cache["table"]
        q = self.rate_matrix(t)
        exits, dests, cums = [], [], []
        for x in range(self.size):
            ys = [y for y in range(self.size) if y != x and q[x, y] > 0]
            c = np.cumsum([q[x, y] for y in ys]).tolist()
            exits.append(c[-1] if c else 0.0)
            dests.append(ys)
            cums.append(c)
        table = (exits, dests, cums)
        if self.rates_time_homogeneous:
            self._cache["table"] = table
        return table

    def generator_with_potential(self, t: float) -> np.ndarray:
        """``L_t - diag(V_t)``."""
        return self.rate_matrix(t) - np.diag(self.potential_vector(t))


@dataclass(frozen=True)
class TorusDiffusionModel:
    """``dX = b(t, X) dt + sigma dW`` on ``[0, 1)^d``, Euler-Maruyama with a fixed step."""

    dimension: int
    drift_fn: Callable
    diffusion_coeff: float
    euler_step: float
    potential_fn: Callable
    potential_sup: float
    potential_time_constant: bool = False
    name: str = "torus"

    def __post_init__(self):
        if self.euler_step <= 0 or self.diffusion_coeff <= 0:
            raise ValueError("euler_step and diffusion_coeff must be positive")
        if self.dimension < 1:
            raise ValueError("torus dimension must be >= 1")

    @property
    def space(self) -> StateSpace:
        return StateSpace.torus(self.dimension)

    def potential(self, t: float, x) -> float:
        v = float(self.potential_fn(t, x))
        if not (0.0 <= v <= self.potential_sup * (1 + 1e-12)):
            raise ModelEvaluationError(
                f"V_{t}({x}) = {v} outside [0, potential_sup={self.potential_sup}]")
        return v

    def euler_move(self, t: float, x: tuple, h: float, noise: np.ndarray) -> tuple:
        b = np.asarray(self.drift_fn(t, x), dtype=float)
        if not np.all(np.isfinite(b)):
            raise ModelEvaluationError(f"non-finite drift at t={t}, x={x}")
        y = (np.asarray(x) + b * h + self.diffusion_coeff * math.sqrt(h) * noise) % 1.0
        return tuple(float(v) for v in y)


def potential(model, t: float, x) -> float:
    """``V_t(x)``, checked against ``[0, potential_sup]``."""
    if not model.space.contains(x):
        raise DomainError(f"{x!r} not in the state space of {model.name}")
    return model.potential(t, x)


# -- free motion --------------------------------------------------------------


def sample_free_motion(model, start, s: float, t: float, rng) -> CadlagPath:
    """One realisation of ``X`` on ``[s, t]`` started at ``start``, ignoring ``V``."""
    if t < s:
        raise DomainError(f"interval [{s}, {t}] is reversed")
    if not model.space.contains(start):
        raise DomainError(f"{start!r} not in the state space of {model.name}")
    stream = as_stream(rng)
    if isinstance(model, TorusDiffusionModel):
        return _euler_path(model, start, s, t, stream)
    times, states = [], []
    x = start
    lam = model.rate_sup
    u = s + stream.exponential(lam)
    while u <= t:
        y = propose_ctmc_jump(model, x, u, stream.uniform() * lam)
        if y is not None:
            times.append(u)
            states.append(y)
            x = y
        u += stream.exponential(lam)
    return CadlagPath._from_arrays(float(s), float(t), start, times, states)


def propose_ctmc_jump(model: FiniteCtmcModel, x: int, s: float, r: float):
    """Thinned jump from ``x`` at a candidate time ``s``.

    ``r`` must be uniform on ``[0, rate_sup)``; the jump happens when ``r``
    falls below the exit rate and ``r`` then also selects the destination.
    Returns the new state or ``None``.
    """
    exits, dests, cums = model.jump_table(s)
    if r >= exits[x]:
        return None
    for y, c in zip(dests[x], cums[x]):
        if r < c:
            return y
    return dests[x][-1]


def euler_grid(s: float, t: float, h: float) -> list[float]:
    """Grid ``s + k h`` strictly inside ``(s, t]`` plus ``t`` itself."""
    n = int(math.floor((t - s) / h + 1e-9))
    pts = [s + k * h for k in range(1, n + 1)]
    if not pts or pts[-1] < t - 1e-12:
        pts.append(t)
    else:
        pts[-1] = t
    return [p for p in pts if p > s]


def _euler_path(model: TorusDiffusionModel, start, s, t, stream) -> CadlagPath:
    x = tuple(float(v) for v in start)
    times, states = [], []
    prev = s
    for g in euler_grid(s, t, model.euler_step):
        x = model.euler_move(prev, x, g - prev, stream.normal(model.dimension))
        times.append(g)
        states.append(x)
        prev = g
    return CadlagPath._from_arrays(float(s), float(t), tuple(float(v) for v in start), times, states)


# -- regularity conditions ------------------------------------------------------


def check_h0_doeblin(model: FiniteCtmcModel, t: float, h: float, rtol: float = 1e-10) -> float:
    """Largest ``rho`` with ``rho mu(y) <= P_{t,t+h}(x, y) <= mu(y) / rho``.

    ``mu`` is the column average of ``P_{t,t+h}``.  Returns 0 when some
    column of the transition matrix vanishes or the two-sided bound fails.
    """
    from .oracle import semigroup_matrix

    if h <= 0:
        raise ValueError("h must be positive")
    p = semigroup_matrix(model, t, t + h, rtol=rtol, with_potential=False)
    p = np.clip(p, 0.0, None)
    mu = p.mean(axis=0)
    if np.any(mu <= 0.0) or np.any(p <= 0.0):
        return 0.0
    ratio = p / mu[None, :]
    return float(min(ratio.min(), (1.0 / ratio).min(), 1.0))


def check_h2_q(model: FiniteCtmcModel, s: float, t: float, rtol: float = 1e-10) -> float:
    """``max_{x,y} log(Q_{s,t}(1)(x) / Q_{s,t}(1)(y))`` from the exact semigroup.

    An entry of ``Q_{s,t}(1)`` within ten ODE absolute tolerances of zero
    cannot be told apart from 0 and is reported as degenerate.
    """
    from .oracle import semigroup_matrix

    if t < s:
        raise DomainError(f"interval [{s}, {t}] is reversed")
    ones = semigroup_matrix(model, s, t, rtol=rtol).sum(axis=1)
    if np.any(ones <= 10.0 * rtol * 1e-3):
        raise DegenerateSemigroupError(f"Q_[{s},{t}](1) vanishes at some state")
    return float(max(math.log(a / b) for a in ones for b in ones))


def check_stationarity(rates_fn: Callable, energies: Sequence[float], schedule: Callable,
                       times: Sequence[float], tol: float = 1e-10) -> float:
    """Max ``|pi_beta L_beta|`` over the given times; raises if above ``tol``."""
    h = np.asarray(energies, dtype=float)
    worst = 0.0
    for t in times:
        w = np.exp(-schedule(t) * (h - h.min()))
        pi = w / w.sum()
        worst = max(worst, float(np.abs(pi @ np.asarray(rates_fn(t), dtype=float)).max()))
    if worst > tol:
        raise ModelConsistencyError(f"pi_beta L_beta != 0 (residual {worst:.3e})")
    return worst
