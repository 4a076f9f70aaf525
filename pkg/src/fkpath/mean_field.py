"""N-particle mean-field system with its genealogical tree.

Between selections each particle moves as the reference process; a particle
at ``x`` fires a selection at rate ``V_s(x)`` and then adopts the ancestral
line of a particle chosen uniformly in the whole pool.  The system carries
the unnormalised many-body weight ``exp(-int_0^t m(xi_s)(V_s) ds)``, whose
product with ``m(xi_t)(f)`` is an unbiased estimate of ``gamma_t(f)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .engine import run_system
from .paths import CadlagPath, PathFunctional, integrate_potential
from .rng import as_stream


@dataclass
class GenealogySystem:
    n_particles: int
    horizon: float
    lines: list[CadlagPath]
    integrated_mean_potential: float
    selection_log: list[tuple] = field(default_factory=list)
    tracks: list[CadlagPath] | None = None

    @property
    def weight(self) -> float:
        return many_body_weight(self)

    def terminal_states(self) -> list:
        return [line.terminal_state for line in self.lines]


@dataclass
class WeightedSample:
    value: float
    weight: float

    def __post_init__(self):
        if not (self.weight > 0 and math.isfinite(self.weight)):
            raise ValueError(f"weight must be positive and finite, got {self.weight}")


def draw_initial(model, init, n: int, stream) -> list:
    draw = init.sampler(model.space)
    return [draw(stream) for _ in range(n)]


def simulate_mean_field(model, n: int, t: float, init, rng,
                        record_tracks: bool = False) -> GenealogySystem:
    """Simulate the N ancestral lines on ``[0, t]`` from i.i.d. ``init`` states."""
    if n < 2:
        raise ValueError(f"n_particles must be >= 2, got {n}")
    if t < 0:
        raise ValueError(f"horizon must be >= 0, got {t}")
    stream = as_stream(rng)
    x0 = draw_initial(model, init, n, stream)
    raw = run_system(model, n, float(t), x0, stream, record_tracks=record_tracks)
    tracks = None
    if raw.tracks is not None:
        tracks = [CadlagPath._from_arrays(0.0, float(t), a, ts, xs)
                  for a, (ts, xs) in zip(x0, raw.tracks)]
    return GenealogySystem(
        n_particles=n,
        horizon=float(t),
        lines=raw.lines(float(t)),
        integrated_mean_potential=raw.integrated_mean_potential,
        selection_log=raw.selection_log,
        tracks=tracks,
    )


def occupation_measure(sys: GenealogySystem, f: PathFunctional) -> float:
    """``m(xi_t)(f) = (1/N) sum_i f(line_i)``."""
    return math.fsum(f(line) for line in sys.lines) / sys.n_particles


def many_body_weight(sys: GenealogySystem) -> float:
    return math.exp(-sys.integrated_mean_potential)


def particle_tracks(sys: GenealogySystem) -> list[CadlagPath]:
    """Trajectories ``s -> xi^i_s`` of the occupied states (needs ``record_tracks``)."""
    if sys.tracks is None:
        raise ValueError("system was simulated without record_tracks=True")
    return sys.tracks


def recompute_integrated_potential(sys: GenealogySystem, model) -> float:
    """``int_0^t m(xi_s)(V_s) ds`` re-integrated from the recorded particle tracks.

    Final ancestral lines show where each particle's ancestors were, not
    where the particles were, so the cross-check uses the occupied-state
    tracks instead.
    """
    return math.fsum(integrate_potential(p, model) for p in particle_tracks(sys)) / sys.n_particles


def sample_ancestral_line(sys: GenealogySystem, rng) -> CadlagPath:
    """A uniform draw from ``m(xi_t)``."""
    stream = as_stream(rng)
    return sys.lines[stream.index(sys.n_particles)]
