"""Particle system with its first ancestral line frozen to a given path.

Lines ``2..N`` move as the reference process and fire selections at rate
``V_s``.  A firing line adopts the frozen line with probability ``2/N`` and
otherwise the line of a uniform peer other than itself.  This is the
conditional law of the remaining lines given the first one, and the refresh
step of the particle Gibbs-Glauber kernel.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field

from .engine import FROZEN, run_system
from .errors import DomainError
from .mean_field import draw_initial
from .paths import CadlagPath, integrate_potential
from .rng import as_stream


@dataclass
class DualSystem:
    n_particles: int
    horizon: float
    frozen_line: CadlagPath
    free_lines: list[CadlagPath]
    # (time, jumper index, target) with target "frozen" or the peer index
    selection_log: list[tuple] = field(default_factory=list)

    @property
    def lines(self) -> list[CadlagPath]:
        return [self.frozen_line, *self.free_lines]

    def target_histogram(self) -> Counter:
        return Counter("frozen" if tag == "frozen" else "peer" for _, _, tag in self.selection_log)


def simulate_conditional(model, n: int, t: float, frozen: CadlagPath, init, rng) -> DualSystem:
    """Run the frozen-line system on ``[0, t]``; free lines start i.i.d. ``init``."""
    if n < 2:
        raise ValueError(f"n_particles must be >= 2, got {n}")
    if frozen.start_time != 0.0 or frozen.end_time != t:
        raise DomainError(f"frozen path lives on [{frozen.start_time}, {frozen.end_time}], "
                          f"expected [0, {t}]")
    stream = as_stream(rng)
    init_states = [frozen.initial_state, *draw_initial(model, init, n - 1, stream)]
    raw = run_system(model, n, float(t), init_states, stream, frozen=frozen, track_weight=False)
    lines = raw.lines(float(t))
    log = [(s, i, "frozen" if j == FROZEN else j) for s, i, j in raw.selection_log]
    return DualSystem(n_particles=n, horizon=float(t), frozen_line=frozen,
                      free_lines=lines[1:], selection_log=log)


def dual_weight(frozen: CadlagPath, model) -> float:
    """``exp(-int_0^t V_s(frozen_s) ds)``."""
    return math.exp(-integrate_potential(frozen, model))


def dual_generator_identity_check(n: int, f, config, potential) -> float:
    """Gap between two forms of the selection term of line ``i`` in the dual generator.

    ``config`` is ``(x^1, ..., x^n)`` with ``x^1`` the frozen coordinate and
    ``potential`` a function of a state.  For every ``i >= 2`` the direct form

        V(x^i) [(1 - 2/n) m(x^{-{1,i}})(f) + (2/n) f(x^1) - f(x^i)]

    is compared with the rescaled form

        (1 - 1/n) V(x^i) [m(x^{-1})(f) - f(x^i)] + (2/n) V(x^i) [f(x^1) - f(x^i)]

    and the largest absolute difference over ``i`` is returned.
    """
    if n < 3:
        raise ValueError("identity check needs n >= 3")
    if len(config) != n:
        raise ValueError(f"config has {len(config)} states, expected {n}")
    fx = [float(f(x)) for x in config]
    vx = [float(potential(x)) for x in config]
    rest = fx[1:]
    worst = 0.0
    for i in range(1, n):
        peers = [fx[j] for j in range(1, n) if j != i]
        direct = vx[i] * ((1.0 - 2.0 / n) * math.fsum(peers) / (n - 2)
                          + (2.0 / n) * fx[0] - fx[i])
        rescaled = ((1.0 - 1.0 / n) * vx[i] * (math.fsum(rest) / (n - 1) - fx[i])
                    + (2.0 / n) * vx[i] * (fx[0] - fx[i]))
        worst = max(worst, abs(direct - rescaled))
    return worst
