"""Piecewise-constant cadlag trajectories and functionals evaluated on them."""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import DomainError
from .quadrature import adaptive_simpson

INTEGRATION_TOL = 1e-10


class CadlagPath:
    """A right-continuous piecewise-constant path on ``[start_time, end_time]``.

    Only change points are stored: ``initial_state`` holds on
    ``[start_time, times[0])`` and ``states[k]`` on ``[times[k], times[k+1])``.
    Instances are treated as immutable values.
    """

    __slots__ = ("start_time", "end_time", "initial_state", "times", "states")

    def __init__(self, start_time: float, end_time: float, initial_state,
                 events: Sequence = (), *, check: bool = True):
        self.start_time = float(start_time)
        self.end_time = float(end_time)
        self.initial_state = initial_state
        self.times = tuple(float(e[0]) for e in events)
        self.states = tuple(e[1] for e in events)
        if check:
            self.validate()

    @classmethod
    def _from_arrays(cls, start_time, end_time, initial_state, times, states) -> "CadlagPath":
        # trusted constructor for the simulation engines
        p = cls.__new__(cls)
        p.start_time = start_time
        p.end_time = end_time
        p.initial_state = initial_state
        p.times = tuple(times)
        p.states = tuple(states)
        return p

    @classmethod
    def constant(cls, state, start_time: float, end_time: float) -> "CadlagPath":
        return cls(start_time, end_time, state, ())

    def validate(self) -> None:
        if not self.start_time <= self.end_time:
            raise DomainError(f"empty domain [{self.start_time}, {self.end_time}]")
        prev = self.start_time
        for t in self.times:
            if not (t > prev and t <= self.end_time):
                raise DomainError(
                    f"event time {t} breaks strict ordering in ({self.start_time}, {self.end_time}]")
            prev = t

    @property
    def events(self) -> list[tuple]:
        return list(zip(self.times, self.states))

    @property
    def terminal_state(self):
        return self.states[-1] if self.states else self.initial_state

    @property
    def n_jumps(self) -> int:
        return len(self.times)

    def __len__(self) -> int:
        return len(self.times)

    def __eq__(self, other) -> bool:
        if not isinstance(other, CadlagPath):
            return NotImplemented
        return (self.start_time == other.start_time and self.end_time == other.end_time
                and self.initial_state == other.initial_state
                and self.times == other.times and self.states == other.states)

    def __hash__(self) -> int:
        return hash((self.start_time, self.end_time, self.initial_state, self.times, self.states))

    def __repr__(self) -> str:
        return (f"CadlagPath([{self.start_time}, {self.end_time}], x0={self.initial_state!r}, "
                f"events={self.events!r})")

    def eval(self, s: float):
        """State at time ``s`` (right-continuous)."""
        if not self.start_time <= s <= self.end_time:
            raise DomainError(f"time {s} outside [{self.start_time}, {self.end_time}]")
        k = bisect_right(self.times, s)
        return self.initial_state if k == 0 else self.states[k - 1]

    __call__ = eval

    def segments(self, a: float | None = None, b: float | None = None):
        """Yield ``(u, v, state)`` constant pieces covering ``[a, b]``."""
        a = self.start_time if a is None else a
        b = self.end_time if b is None else b
        if not self.start_time <= a <= b <= self.end_time:
            raise DomainError(f"[{a}, {b}] not inside [{self.start_time}, {self.end_time}]")
        k = bisect_right(self.times, a)
        state = self.initial_state if k == 0 else self.states[k - 1]
        u = a
        times = self.times
        while k < len(times) and times[k] < b:
            yield u, times[k], state
            u = times[k]
            state = self.states[k]
            k += 1
        yield u, b, state

    def restrict(self, s: float) -> "CadlagPath":
        """The same path on ``[start_time, s]``."""
        if not self.start_time <= s <= self.end_time:
            raise DomainError(f"time {s} outside [{self.start_time}, {self.end_time}]")
        k = bisect_right(self.times, s)
        return CadlagPath._from_arrays(self.start_time, s, self.initial_state,
                                       self.times[:k], self.states[:k])

    def to_record(self) -> dict:
        return {
            "t0": self.start_time,
            "t1": self.end_time,
            "x0": _jsonable_state(self.initial_state),
            "events": [[t, _jsonable_state(x)] for t, x in zip(self.times, self.states)],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "CadlagPath":
        return cls(rec["t0"], rec["t1"], _state_from_json(rec["x0"]),
                   [(t, _state_from_json(x)) for t, x in rec["events"]])

    def to_json(self) -> str:
        return json.dumps(self.to_record())

    @classmethod
    def from_json(cls, text: str) -> "CadlagPath":
        return cls.from_record(json.loads(text))


def _jsonable_state(x):
    if isinstance(x, tuple):
        return list(x)
    return x


def _state_from_json(x):
    if isinstance(x, list):
        return tuple(float(v) for v in x)
    return x


def integrate_potential(path: CadlagPath, model, a: float | None = None,
                        b: float | None = None, tol: float = INTEGRATION_TOL) -> float:
    """Integral of ``V_s(path(s))`` over ``[a, b]``.

    Closed form per constant piece when the model potential does not depend
    on time; adaptive Simpson per piece otherwise.
    """
    a = path.start_time if a is None else a
    b = path.end_time if b is None else b
    pieces = list(path.segments(a, b))
    if model.potential_time_constant:
        pot = model.potential
        return math.fsum(pot(u, x) * (v - u) for u, v, x in pieces)
    tol_each = tol / max(len(pieces), 1)
    total = []
    for u, v, x in pieces:
        total.append(adaptive_simpson(lambda s, x=x: model.potential(s, x), u, v, tol_each))
    return math.fsum(total)


def splice_adopt(adopter: CadlagPath, donor: CadlagPath, s: float) -> CadlagPath:
    """Ancestral line after ``adopter`` jumps onto ``donor`` at time ``s``.

    The adopter's own history is discarded: the result is the donor's line
    on ``[start_time, s]``.
    """
    if adopter.start_time != donor.start_time:
        raise DomainError("adopter and donor start at different times")
    if not (adopter.start_time <= s <= adopter.end_time and s <= donor.end_time):
        raise DomainError(f"splice time {s} outside the common domain")
    return donor.restrict(s)


# -- path functionals -------------------------------------------------------


class PathFunctional:
    """Real-valued function of a path; subclasses implement ``__call__``."""

    name: str = "functional"

    def __call__(self, path: CadlagPath) -> float:  # pragma: no cover - abstract
        raise NotImplementedError

    def __mul__(self, other: "PathFunctional") -> "Product":
        return Product([self, other])


@dataclass
class Terminal(PathFunctional):
    """``f(x_t)`` for the terminal state."""

    f: Callable
    name: str = "terminal"

    def __call__(self, path: CadlagPath) -> float:
        return float(self.f(path.terminal_state))


@dataclass
class StateAt(PathFunctional):
    """``f(x_s)`` at a fixed time ``s`` inside the path domain."""

    time: float
    f: Callable
    name: str = "state_at"

    def __call__(self, path: CadlagPath) -> float:
        return float(self.f(path.eval(self.time)))


@dataclass
class TimeIntegral(PathFunctional):
    """``int g(s, x_s) ds`` over the whole path domain.

    With ``time_constant=True`` ``g`` is evaluated once per constant piece,
    which is exact when ``g`` ignores its time argument.
    """

    g: Callable
    time_constant: bool = False
    name: str = "time_integral"

    def __call__(self, path: CadlagPath) -> float:
        pieces = list(path.segments())
        if self.time_constant:
            return math.fsum(self.g(u, x) * (v - u) for u, v, x in pieces)
        tol = INTEGRATION_TOL / max(len(pieces), 1)
        return math.fsum(adaptive_simpson(lambda s, x=x: self.g(s, x), u, v, tol)
                         for u, v, x in pieces)


@dataclass
class JumpCount(PathFunctional):
    name: str = "jump_count"

    def __call__(self, path: CadlagPath) -> float:
        return float(path.n_jumps)


@dataclass
class Product(PathFunctional):
    factors: list = field(default_factory=list)
    name: str = "product"

    def __call__(self, path: CadlagPath) -> float:
        out = 1.0
        for fn in self.factors:
            out *= fn(path)
        return out


@dataclass(frozen=True)
class Indicator:
    """``x -> 1{x == state}`` (picklable, unlike a lambda)."""

    state: object

    def __call__(self, x) -> float:
        return 1.0 if x == self.state else 0.0


def indicator(state) -> Indicator:
    return Indicator(state)


@dataclass(frozen=True)
class TimeFree:
    """Adapts a state function ``g(x)`` to the ``g(s, x)`` signature."""

    g: Callable

    def __call__(self, s, x) -> float:
        return self.g(x)


def common_prefix_time(p: CadlagPath, q: CadlagPath) -> float:
    """Largest ``u`` such that ``p`` and ``q`` coincide on ``[start, u)``.

    Two ancestral lines that coalesced at some time agree on their whole
    shared history; this is the time up to which they are identical.
    """
    if p.initial_state != q.initial_state:
        return p.start_time
    n = min(len(p.times), len(q.times))
    for k in range(n):
        if p.times[k] != q.times[k] or p.states[k] != q.states[k]:
            return min(p.times[k], q.times[k])
    end = min(p.end_time, q.end_time)
    if len(p.times) > n:
        return min(p.times[n], end)
    if len(q.times) > n:
        return min(q.times[n], end)
    return end

