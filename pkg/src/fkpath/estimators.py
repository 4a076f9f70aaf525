"""Replica harness and the Monte Carlo experiments built on the particle systems.

All experiments work in gamma-form: they estimate unnormalised quantities
such as ``gamma_t(f) = E[f(X_t) exp(-int V)]`` and divide by an oracle or an
estimated ``Z_t`` when a normalised statement is needed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np

from .conditional import dual_weight, simulate_conditional
from .errors import FunctionalError
from .mean_field import occupation_measure, simulate_mean_field
from .models import (
    FiniteCtmcModel,
    InitialLaw,
    JarzynskiPotential,
    LinearSchedule,
    MetropolisRates,
    check_stationarity,
    sample_free_motion,
)
from .oracle import free_energy_check, solve_gamma
from .paths import (
    CadlagPath,
    Indicator,
    JumpCount,
    PathFunctional,
    StateAt,
    Terminal,
    TimeFree,
    TimeIntegral,
    common_prefix_time,
)
from .rng import TAG_CONDITIONAL, TAG_MEAN_FIELD, RandomStream, replica_seed


@dataclass
class MonteCarloEstimate:
    mean: float
    std_error: float
    n_replicas: int
    seed: int | None = None

    @classmethod
    def from_samples(cls, samples, seed: int | None = None) -> "MonteCarloEstimate":
        x = np.asarray(samples, dtype=float)
        if x.size < 2:
            raise ValueError("need at least 2 replicas")
        return cls(float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size)), int(x.size), seed)

    def z_against(self, value: float) -> float:
        return _z(self.mean - value, self.std_error)

    def to_record(self) -> dict:
        return {"mean": self.mean, "std_error": self.std_error, "n_replicas": self.n_replicas,
                "seed": self.seed}


def _z(diff: float, se: float) -> float:
    if se == 0.0:
        return 0.0 if abs(diff) < 1e-15 else math.copysign(math.inf, diff)
    return diff / se


def resolve_threads(threads: int | None = None) -> int:
    env = os.environ.get("FKPATH_THREADS")
    if env:
        return max(1, int(env))
    return max(1, int(threads or 1))


def map_replicas(worker: Callable[[int], object], n_replicas: int, threads: int = 1) -> list:
    """``[worker(r) for r in range(n_replicas)]``, optionally over worker processes.

    Results always come back in replica order, so outputs do not depend on
    the number of workers.  ``worker`` must be picklable when ``threads > 1``.
    """
    if threads <= 1 or n_replicas < 2 * threads:
        return [worker(r) for r in range(n_replicas)]
    chunk = max(1, n_replicas // (8 * threads))
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(worker, range(n_replicas), chunksize=chunk))


def _as_functional(f) -> PathFunctional:
    if isinstance(f, PathFunctional):
        return f
    return Terminal(f)


# -- mean-field replicas ----------------------------------------------------------


@dataclass
class ReplicaRow:
    replica_id: int
    seed: int
    weight: float
    values: list[float]


def _mean_field_replica(r, *, model, n, t, init, functionals, master_seed):
    seed = replica_seed(master_seed, TAG_MEAN_FIELD, r)
    sys = simulate_mean_field(model, n, t, init, RandomStream.from_seed(seed))
    return ReplicaRow(r, seed, sys.weight, [occupation_measure(sys, f) for f in functionals])


def mean_field_replicas(model, n: int, t: float, init, functionals, replicas: int,
                        seed: int, threads: int = 1) -> list[ReplicaRow]:
    """Run ``replicas`` independent systems; one row per replica in replica order."""
    fns = [_as_functional(f) for f in functionals]
    worker = partial(_mean_field_replica, model=model, n=n, t=t, init=init,
                     functionals=fns, master_seed=seed)
    return map_replicas(worker, replicas, threads)


def estimate_gamma(model, n: int, t: float, f, replicas: int, seed: int, init,
                   threads: int = 1) -> MonteCarloEstimate:
    """Unbiased estimate of ``gamma_t(f)`` from ``m(xi_t)(f) * Z_t(xi)``."""
    rows = mean_field_replicas(model, n, t, init, [f], replicas, seed, threads)
    return MonteCarloEstimate.from_samples([r.weight * r.values[0] for r in rows], seed)


# -- bias sweep ---------------------------------------------------------------------


@dataclass
class BiasRow:
    n: int
    bias: float
    std_error: float
    mean: float
    replicas: int


def bias_sweep(model, t: float, f, n_list, replicas, seed: int, init,
               threads: int = 1) -> list[BiasRow]:
    """``E[m(xi_t)(f)] - eta_t(f)`` for each ``N`` (finite models only).

    ``replicas`` is an int or a per-``N`` list.  Each ``N`` uses its own
    seed stream (master seed offset by ``N``).
    """
    if not isinstance(model, FiniteCtmcModel):
        raise TypeError("bias_sweep needs a finite-state oracle")
    f = _as_functional(f)
    if not isinstance(f, Terminal):
        raise TypeError("bias_sweep compares terminal functionals with the oracle")
    eta = solve_gamma(model, init.vector(model.size), t).eta
    target = float(sum(eta[x] * f.f(x) for x in range(model.size)))
    reps = list(replicas) if isinstance(replicas, (list, tuple)) else [replicas] * len(n_list)
    out = []
    for n, r in zip(n_list, reps):
        if n < 2:
            raise ValueError(f"N must be >= 2, got {n}")
        rows = mean_field_replicas(model, n, t, init, [f], r, seed * 1000 + n, threads)
        est = MonteCarloEstimate.from_samples([row.values[0] for row in rows])
        out.append(BiasRow(n, est.mean - target, est.std_error, est.mean, r))
    return out


@dataclass
class BiasScaling:
    ratio: float
    ratio_std_error: float
    status: str  # "pass", "fail" or "inconclusive"
    detail: str


def bias_scaling_verdict(small: BiasRow, large: BiasRow, lo: float = 1.5, hi: float = 2.7,
                         snr: float = 4.0) -> BiasScaling:
    """Judge ``bias(N) / bias(2N)`` against ``[lo, hi]``.

    The ratio is only meaningful when both standard errors are below
    ``|bias| / snr``; otherwise the verdict falls back to checking both
    biases against 0 at 3 standard errors and reports ``inconclusive``.
    """
    resolved = (abs(small.bias) > snr * small.std_error and abs(large.bias) > snr * large.std_error)
    if not resolved:
        ok = all(abs(r.bias) <= 3 * r.std_error for r in (small, large))
        return BiasScaling(math.nan, math.nan, "inconclusive" if ok else "fail",
                           "bias not resolved at this replica count")
    ratio = small.bias / large.bias
    rel = math.hypot(small.std_error / small.bias, large.std_error / large.bias)
    status = "pass" if lo <= ratio <= hi else "fail"
    return BiasScaling(ratio, abs(ratio) * rel, status, f"ratio {ratio:.3f} vs [{lo}, {hi}]")


# -- duality -------------------------------------------------------------------------


@dataclass
class DualityFunctional:
    """``F(distinguished line, other lines)``; must be symmetric in the other lines."""

    name: str
    fn: Callable

    def __call__(self, distinguished: CadlagPath, others: list[CadlagPath]) -> float:
        return float(self.fn(distinguished, others))


@dataclass(frozen=True)
class _One:
    def __call__(self, d, o):
        return 1.0


@dataclass(frozen=True)
class _OnDistinguished:
    functional: PathFunctional

    def __call__(self, d, o):
        return self.functional(d)


@dataclass(frozen=True)
class _MeanOverOthers:
    functional: PathFunctional

    def __call__(self, d, o):
        return math.fsum(self.functional(p) for p in o) / len(o)


@dataclass(frozen=True)
class _DistTimesOthers:
    dist: PathFunctional
    others: PathFunctional

    def __call__(self, d, o):
        return self.dist(d) * math.fsum(self.others(p) for p in o) / len(o)


@dataclass(frozen=True)
class _TerminalAgreement:
    def __call__(self, d, o):
        x = d.terminal_state
        return sum(1.0 for p in o if p.terminal_state == x) / len(o)


@dataclass(frozen=True)
class _SharedHistory:
    """Fraction of other lines identical to the distinguished one on ``[0, time)``."""

    time: float

    def __call__(self, d, o):
        return sum(1.0 for p in o if common_prefix_time(d, p) >= self.time) / len(o)


def default_duality_battery(t: float, state: int = 1, other: int = 0) -> list[DualityFunctional]:
    """Twelve functionals mixing the distinguished line, the other lines and their genealogy."""
    hi, lo = Indicator(state), Indicator(other)
    mid = 0.5 * t
    return [
        DualityFunctional("one", _One()),
        DualityFunctional("dist_terminal_lo", _OnDistinguished(Terminal(lo))),
        DualityFunctional("dist_terminal_hi", _OnDistinguished(Terminal(hi))),
        DualityFunctional("dist_jumps", _OnDistinguished(JumpCount())),
        DualityFunctional("dist_time_hi", _OnDistinguished(TimeIntegral(TimeFree(hi), True))),
        DualityFunctional("dist_mid_hi", _OnDistinguished(StateAt(mid, hi))),
        DualityFunctional("dist_mid_lo_end_hi",
                          _OnDistinguished(StateAt(mid, lo) * Terminal(hi))),
        DualityFunctional("others_terminal_hi", _MeanOverOthers(Terminal(hi))),
        DualityFunctional("dist_hi_x_others_hi", _DistTimesOthers(Terminal(hi), Terminal(hi))),
        DualityFunctional("terminal_agreement", _TerminalAgreement()),
        DualityFunctional("shared_history_half", _SharedHistory(mid)),
        DualityFunctional("others_jumps", _MeanOverOthers(JumpCount())),
    ]


@dataclass
class DualityRow:
    name: str
    lhs: float
    lhs_se: float
    rhs: float
    rhs_se: float

    @property
    def combined_se(self) -> float:
        return math.hypot(self.lhs_se, self.rhs_se)

    @property
    def z(self) -> float:
        return _z(self.lhs - self.rhs, self.combined_se)


@dataclass
class DualityReport:
    n_particles: int
    horizon: float
    replicas: int
    seed: int
    rows: list[DualityRow] = field(default_factory=list)

    def z_scores(self) -> list[float]:
        return [r.z for r in self.rows]

    def passes(self, z_max: float = 3.0, marginal: float = 3.5, allowed_marginal: int = 1) -> bool:
        zs = [abs(z) for z in self.z_scores()]
        if any(z > marginal for z in zs):
            return False
        return sum(z > z_max for z in zs) <= allowed_marginal


def _eval_battery(functionals, dist, others):
    out = []
    for k, fn in enumerate(functionals):
        try:
            v = fn(dist, others)
        except Exception as exc:  # noqa: BLE001 - re-raised with the functional index
            raise FunctionalError(k, f"{getattr(fn, 'name', fn)!r}: {exc}") from exc
        if not math.isfinite(v):
            raise FunctionalError(k, f"{getattr(fn, 'name', fn)!r} returned {v}")
        out.append(v)
    return out


def _duality_lhs(r, *, model, n, t, init, functionals, master_seed):
    sys = simulate_mean_field(model, n, t, init,
                              RandomStream.from_seed(replica_seed(master_seed, TAG_MEAN_FIELD, r)))
    w = sys.weight
    lines = sys.lines
    acc = np.zeros(len(functionals))
    # average over the distinguished index instead of drawing it
    for i in range(n):
        acc += _eval_battery(functionals, lines[i], lines[:i] + lines[i + 1:])
    return acc * (w / n)


def _duality_rhs(r, *, model, n, t, init, functionals, master_seed):
    stream = RandomStream.from_seed(replica_seed(master_seed, TAG_CONDITIONAL, r))
    x0 = init.sampler(model.space)(stream)
    path = sample_free_motion(model, x0, 0.0, t, stream)
    dual = simulate_conditional(model, n, t, path, init, stream)
    w = dual_weight(path, model)
    return np.asarray(_eval_battery(functionals, path, dual.free_lines)) * w


def duality_check(model, n: int, t: float, functionals, replicas: int, seed: int, init,
                  threads: int = 1) -> DualityReport:
    """Two-sample comparison of both sides of the duality formula.

    Left: ``F(X, xi_hat) exp(-int m(xi_s)(V_s) ds)`` with ``X`` uniform among
    the final lines of the mean-field system (averaged over the ``N``
    choices).  Right: ``F(X_hat, zeta_hat) exp(-int V_s(X_s) ds)`` with
    ``X_hat`` a free path and ``zeta_hat`` the frozen-line system around it.
    """
    if replicas < 100:
        raise ValueError("duality_check needs at least 100 replicas per side")
    kw = dict(model=model, n=n, t=t, init=init, functionals=list(functionals), master_seed=seed)
    lhs = np.array(map_replicas(partial(_duality_lhs, **kw), replicas, threads))
    rhs = np.array(map_replicas(partial(_duality_rhs, **kw), replicas, threads))
    report = DualityReport(n, float(t), replicas, seed)
    for k, fn in enumerate(functionals):
        a = MonteCarloEstimate.from_samples(lhs[:, k])
        b = MonteCarloEstimate.from_samples(rhs[:, k])
        report.rows.append(DualityRow(fn.name, a.mean, a.std_error, b.mean, b.std_error))
    return report


# -- Jarzynski ---------------------------------------------------------------------


@dataclass
class JarzynskiResult:
    estimate: MonteCarloEstimate
    exact_ratio: float
    oracle_z: float
    identity_residual: float
    stationarity_residual: float

    @property
    def z(self) -> float:
        return self.estimate.z_against(self.exact_ratio)


def jarzynski_model(energies, schedule, t: float, rates_fn=None, rate_sup: float | None = None,
                    base_rate: float = 1.0) -> FiniteCtmcModel:
    """Finite model with ``L_{beta_t}`` dynamics and ``V_t = beta'_t H``."""
    h = tuple(float(x) for x in energies)
    if rates_fn is None:
        rates_fn = MetropolisRates(h, schedule, base_rate)
        rate_sup = base_rate if rate_sup is None else rate_sup
    if rate_sup is None:
        # grid maximum with a margin; the model rejects any exit rate above it
        grid = np.linspace(0.0, t, 201)
        rate_sup = 1.05 * max(float(np.max(-np.diag(np.asarray(rates_fn(s))))) for s in grid)
    vmax = max(abs(schedule.derivative(s)) for s in np.linspace(0.0, t, 101))
    if hasattr(schedule, "derivative_sup"):
        vmax = max(vmax, schedule.derivative_sup(t))
    return FiniteCtmcModel(
        size=len(h),
        rate_matrix_fn=rates_fn,
        potential_fn=JarzynskiPotential(h, schedule),
        potential_sup=vmax * max(abs(x) for x in h),
        rate_sup=rate_sup,
        rates_time_homogeneous=False,
        potential_time_constant=isinstance(schedule, LinearSchedule),
        name="jarzynski",
    )


def boltzmann(energies, beta: float) -> np.ndarray:
    h = np.asarray(energies, dtype=float)
    w = np.exp(-beta * h)
    return w / w.sum()


def jarzynski_experiment(energies, schedule, t: float, n: int, replicas: int, seed: int,
                         rates_fn=None, rate_sup: float | None = None,
                         threads: int = 1) -> JarzynskiResult:
    """Estimate ``Z_{beta_t} / Z_{beta_0}`` with the particle system and compare to exact values.

    The base dynamics must leave ``pi_beta`` invariant at every ``beta``;
    this is checked on a time grid and a ``ModelConsistencyError`` raised
    otherwise.
    """
    model = jarzynski_model(energies, schedule, t, rates_fn, rate_sup)
    stat = check_stationarity(model.rate_matrix_fn, energies, schedule,
                              np.linspace(0.0, t, 21), tol=1e-10)
    pi0 = boltzmann(energies, schedule(0.0))
    init = InitialLaw.categorical(pi0.tolist())
    rows = mean_field_replicas(model, n, t, init, [], replicas, seed, threads)
    est = MonteCarloEstimate.from_samples([r.weight for r in rows], seed)
    h = np.asarray(energies, dtype=float)
    exact = float(np.exp(-schedule(t) * h).sum() / np.exp(-schedule(0.0) * h).sum())
    fe = free_energy_check(model, pi0, t)
    return JarzynskiResult(est, exact, fe.z_linear, fe.residual, stat)
