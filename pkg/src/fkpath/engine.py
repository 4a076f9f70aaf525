"""Event loop shared by the mean-field and frozen-line particle systems.

Finite chains use one global uniformised clock of rate
``n_active * (rate_sup + potential_sup)``.  At each candidate time a single
uniform picks the particle, decides between a motion candidate and a
selection candidate, and performs the thinning test; accepted motion
candidates reuse the same uniform to pick the destination.  Torus diffusions
move every particle at the Euler grid times and receive selection
candidates from a Poisson clock of rate ``n_active * potential_sup``.

Ancestral lines are kept as ``(initial_state, times, states)`` lists; an
adoption copies the target's lists.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .models import TorusDiffusionModel, euler_grid
from .paths import CadlagPath
from .quadrature import adaptive_simpson

FROZEN = -1  # target tag for adoptions of the frozen line


@dataclass
class RawSystem:
    x0: list
    times: list
    states: list
    selection_log: list = field(default_factory=list)
    integrated_mean_potential: float = 0.0
    # per-particle occupied-state trajectories (not ancestral lines), optional
    tracks: list | None = None

    def lines(self, t: float) -> list[CadlagPath]:
        return [CadlagPath._from_arrays(0.0, t, a, ts, xs)
                for a, ts, xs in zip(self.x0, self.times, self.states)]


class _Weight:
    """Running ``int_0^s m(x_u)(V_u) du`` along a piecewise-constant configuration."""

    __slots__ = ("model", "n", "cur", "last", "acc", "sum_v", "vvec")

    def __init__(self, model, cur: list):
        self.model = model
        self.n = len(cur)
        self.cur = cur
        self.last = 0.0
        self.acc = 0.0
        if model.potential_time_constant:
            self.vvec = {}
            self.sum_v = math.fsum(self._v(x) for x in cur)
        else:
            self.vvec = None
            self.sum_v = 0.0

    def _v(self, x):
        if not isinstance(x, int):
            return self.model.potential(0.0, x)
        v = self.vvec.get(x)
        if v is None:
            v = self.vvec[x] = self.model.potential(0.0, x)
        return v

    def advance(self, s: float) -> None:
        if s <= self.last:
            return
        if self.vvec is not None:
            self.acc += self.sum_v * (s - self.last) / self.n
        else:
            cfg = list(self.cur)
            pot = self.model.potential
            n = self.n
            self.acc += adaptive_simpson(lambda u: math.fsum(pot(u, x) for x in cfg) / n,
                                         self.last, s, 1e-10 / 8)
        self.last = s

    def replace(self, old, new) -> None:
        # caller must advance() to the event time first
        if self.vvec is not None:
            self.sum_v += self._v(new) - self._v(old)


def _adopt_frozen(frozen: CadlagPath, s: float):
    k = bisect_right(frozen.times, s)
    state = frozen.initial_state if k == 0 else frozen.states[k - 1]
    return frozen.initial_state, list(frozen.times[:k]), list(frozen.states[:k]), state


def run_system(model, n: int, t: float, init: list, stream, frozen: CadlagPath | None = None,
               track_weight: bool = True, record_tracks: bool = False) -> RawSystem:
    """Simulate ``n`` ancestral lines on ``[0, t]``.

    ``init`` holds the time-0 states.  When ``frozen`` is given, line 0 is
    that path and only lines ``1..n-1`` evolve; a firing selection of line
    ``i`` adopts the frozen line with probability ``2/n`` and a uniform line
    among ``{1..n-1} \\ {i}`` otherwise.  Without ``frozen``, all ``n`` lines
    evolve and a firing selection adopts a uniform line among all ``n``
    (self-adoption is a silent no-op).

    With ``record_tracks`` the state occupied by each particle over time is
    also kept, as ``(times, states)`` change points per particle.
    """
    if isinstance(model, TorusDiffusionModel):
        return _run_grid(model, n, t, init, stream, frozen, track_weight, record_tracks)
    return _run_finite(model, n, t, init, stream, frozen, track_weight, record_tracks)


def _pick_target(i: int, n: int, stream, frozen) -> int:
    if frozen is None:
        return stream.index(n)
    if stream.uniform() * n < 2.0:
        return FROZEN
    # uniform peer in {1..n-1} minus {i}
    j = 1 + stream.index(n - 2)
    return j + 1 if j >= i else j


def _run_finite(model, n, t, init, stream, frozen, track_weight, record_tracks):
    lam_m = float(model.rate_sup)
    lam_v = float(model.potential_sup)
    per = lam_m + lam_v
    offset = 0 if frozen is None else 1
    active = n - offset
    total = active * per

    cur = list(init)
    x0 = list(init)
    times = [[] for _ in range(n)]
    states = [[] for _ in range(n)]
    if frozen is not None:
        x0[0], times[0], states[0] = frozen.initial_state, list(frozen.times), list(frozen.states)
        cur[0] = None  # never read: adoptions of line 0 go through _adopt_frozen
    log = []
    weight = _Weight(model, cur) if track_weight and frozen is None else None
    tracks = [([], []) for _ in range(n)] if record_tracks else None

    homog = model.rates_time_homogeneous
    exits, dests, cums = model.jump_table(0.0) if homog else (None, None, None)
    pconst = model.potential_time_constant
    vvec = model.potential_vector(0.0).tolist() if pconst else None
    potential = model.potential
    uniform = stream.uniform
    exponential = stream.exponential

    s = 0.0
    if total <= 0.0:
        s = math.inf
    while True:
        s += exponential(total)
        if s > t:
            break
        w = uniform() * total
        i = int(w / per)
        if i >= active:
            i = active - 1
        r = w - i * per
        i += offset
        x = cur[i]
        if r < lam_m:
            if not homog:
                exits, dests, cums = model.jump_table(s)
            if r >= exits[x]:
                continue
            y = dests[x][-1]
            for d, c in zip(dests[x], cums[x]):
                if r < c:
                    y = d
                    break
            if weight is not None:
                weight.advance(s)
                weight.replace(x, y)
            cur[i] = y
            times[i].append(s)
            states[i].append(y)
            if tracks is not None:
                tracks[i][0].append(s)
                tracks[i][1].append(y)
        else:
            vx = vvec[x] if pconst else potential(s, x)
            if r - lam_m >= vx:
                continue
            j = _pick_target(i, n, stream, frozen)
            if j == i:
                continue
            if j == FROZEN:
                a, ts, xs, y = _adopt_frozen(frozen, s)
            else:
                a, ts, xs, y = x0[j], times[j][:], states[j][:], cur[j]
            if weight is not None:
                weight.advance(s)
                weight.replace(x, y)
            x0[i], times[i], states[i], cur[i] = a, ts, xs, y
            log.append((s, i, j))
            if tracks is not None and y != x:
                tracks[i][0].append(s)
                tracks[i][1].append(y)
    out = RawSystem(x0=x0, times=times, states=states, selection_log=log, tracks=tracks)
    if weight is not None:
        weight.advance(t)
        out.integrated_mean_potential = weight.acc
    return out


def _run_grid(model, n, t, init, stream, frozen, track_weight, record_tracks):
    lam_v = float(model.potential_sup)
    offset = 0 if frozen is None else 1
    active = n - offset
    cur = list(init)
    x0 = list(init)
    times = [[] for _ in range(n)]
    states = [[] for _ in range(n)]
    if frozen is not None:
        x0[0], times[0], states[0] = frozen.initial_state, list(frozen.times), list(frozen.states)
        cur[0] = None
    log = []
    weight = _Weight(model, cur) if track_weight and frozen is None else None
    tracks = [([], []) for _ in range(n)] if record_tracks else None
    grid = euler_grid(0.0, t, model.euler_step) if t > 0 else []
    d = model.dimension

    s = 0.0
    prev_grid = 0.0
    next_sel = stream.exponential(active * lam_v)
    for g in grid:
        while next_sel < g:
            s = next_sel
            i = offset + stream.index(active)
            x = cur[i]
            if stream.uniform() * lam_v < model.potential(s, x):
                j = _pick_target(i, n, stream, frozen)
                if j != i:
                    if j == FROZEN:
                        a, ts, xs, y = _adopt_frozen(frozen, s)
                    else:
                        a, ts, xs, y = x0[j], times[j][:], states[j][:], cur[j]
                    if weight is not None:
                        weight.advance(s)
                        weight.replace(x, y)
                    x0[i], times[i], states[i], cur[i] = a, ts, xs, y
                    log.append((s, i, j))
                    if tracks is not None:
                        tracks[i][0].append(s)
                        tracks[i][1].append(y)
            next_sel = s + stream.exponential(active * lam_v)
        if weight is not None:
            weight.advance(g)
        h = g - prev_grid
        for i in range(offset, n):
            y = model.euler_move(prev_grid, cur[i], h, stream.normal(d))
            if weight is not None:
                weight.replace(cur[i], y)
            cur[i] = y
            times[i].append(g)
            states[i].append(y)
            if tracks is not None:
                tracks[i][0].append(g)
                tracks[i][1].append(y)
        prev_grid = g
    out = RawSystem(x0=x0, times=times, states=states, selection_log=log, tracks=tracks)
    if weight is not None:
        weight.advance(t)
        out.integrated_mean_potential = weight.acc
    return out
