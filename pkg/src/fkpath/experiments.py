"""Experiment runners behind ``fkpath run``.

Each runner takes a loaded :class:`~fkpath.catalog.ModelBundle` and a
validated parameter dict and returns an :class:`ExperimentResult` holding
declared checks, a JSON-ready summary and CSV tables.  Nothing here touches
the file system or the clock, so results are a pure function of the config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .conditional import dual_generator_identity_check, simulate_conditional
from .estimators import (
    MonteCarloEstimate,
    bias_scaling_verdict,
    bias_sweep,
    default_duality_battery,
    duality_check,
    jarzynski_experiment,
    map_replicas,
    mean_field_replicas,
)
from .gibbs import gibbs_chain, integrated_autocorrelation_time, mcse, symmetry_gap
from .models import FiniteCtmcModel, check_h0_doeblin, check_h2_q, sample_free_motion
from .oracle import expm, free_energy_check, semigroup_matrix, smoothing_integral, solve_gamma
from .paths import Indicator, JumpCount, StateAt, Terminal, TimeFree, TimeIntegral
from .rng import TAG_AUX, TAG_CONDITIONAL, TAG_FREE_MOTION, TAG_GIBBS, RandomStream, replica_seed


@dataclass
class Check:
    name: str
    passed: bool
    detail: str
    status: str = ""

    def __post_init__(self):
        if not self.status:
            self.status = "PASS" if self.passed else "FAIL"

    def line(self) -> str:
        return f"{self.status:<13} {self.name}: {self.detail}"

    def to_record(self) -> dict:
        return {"name": self.name, "pass": self.passed, "status": self.status, "detail": self.detail}


@dataclass
class Table:
    header: list[str]
    rows: list[list] = field(default_factory=list)


@dataclass
class ExperimentResult:
    experiment: str
    params: dict
    checks: list[Check] = field(default_factory=list)
    estimates: list[dict] = field(default_factory=list)
    extra: dict = field(default_factory=dict)
    tables: dict[str, Table] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def summary(self) -> dict:
        return {
            "experiment": self.experiment,
            "params": self.params,
            "estimates": self.estimates,
            "z_scores": [e["z"] for e in self.estimates if "z" in e],
            "checks": [c.to_record() for c in self.checks],
            "pass": self.passed,
            **self.extra,
        }


def _z_check(name: str, est: float, se: float, target: float, z_max: float = 3.0):
    z = 0.0 if se == 0.0 and est == target else (est - target) / se if se > 0 else math.inf
    return Check(name, abs(z) <= z_max, f"{est:.6g} vs {target:.6g}, z = {z:+.2f}"), z


def _listify(v):
    return list(v) if isinstance(v, (list, tuple)) else [v]


# -- oracle ------------------------------------------------------------------------


def run_oracle(bundle, p: dict) -> ExperimentResult:
    model = bundle.model
    t = p["t"]
    rtol = p.get("rtol", 1e-10)
    res = ExperimentResult("oracle", p)
    sol = solve_gamma(model, bundle.gamma0, t, rtol)
    res.extra["oracle"] = sol.to_record(model)
    if sol.expm_residual is not None:
        res.checks.append(Check("rk_vs_expm", sol.expm_residual <= 1e-9,
                                f"max |gamma_RK - gamma_expm| = {sol.expm_residual:.3e} (<= 1e-9)"))
    q = semigroup_matrix(model, 0.0, t, rtol)
    half = semigroup_matrix(model, 0.0, t / 2, rtol) @ semigroup_matrix(model, t / 2, t, rtol)
    comp = float(np.abs(q - half).max())
    res.checks.append(Check("semigroup_composition", comp <= 1e-8,
                            f"max |Q_0t - Q_0s Q_st| = {comp:.3e} (<= 1e-8)"))
    fe = free_energy_check(model, bundle.gamma0, t, rtol)
    res.checks.append(Check("free_energy_identity", fe.residual <= 1e-8,
                            f"|Z_t - Z_0 exp(-int eta(V))| = {fe.residual:.3e} (<= 1e-8)"))
    tab = Table(["state", "gamma", "eta"])
    for x in range(model.size):
        tab.rows.append([x, sol.gamma[x], sol.eta[x]])
    res.tables["oracle"] = tab
    res.estimates.append({"name": "Z_t", "value": sol.z})
    return res


# -- simulate ----------------------------------------------------------------------


def _free_motion_replica(r, *, model, t, init, master_seed):
    seed = replica_seed(master_seed, TAG_FREE_MOTION, r)
    stream = RandomStream.from_seed(seed)
    x0 = init.sampler(model.space)(stream)
    path = sample_free_motion(model, x0, 0.0, t, stream)
    return seed, path.terminal_state, path.n_jumps


def _conditional_replica(r, *, model, n, t, init, master_seed):
    seed = replica_seed(master_seed, TAG_CONDITIONAL, r)
    stream = RandomStream.from_seed(seed)
    frozen = sample_free_motion(model, init.sampler(model.space)(stream), 0.0, t, stream)
    dual = simulate_conditional(model, n, t, frozen, init, stream)
    hist = dual.target_histogram()
    return seed, hist["frozen"], hist["peer"]


def transition_row(model, init, t: float) -> np.ndarray:
    """Law of ``X_t`` under ``init`` from the matrix exponential (exact oracle)."""
    if model.rates_time_homogeneous:
        p = expm(t * model.rate_matrix(0.0))
    else:
        p = semigroup_matrix(model, 0.0, t, with_potential=False)
    return init.vector(model.size) @ p


def run_simulate(bundle, p: dict) -> ExperimentResult:
    mode = p.get("mode", "mean-field")
    if mode == "free-motion":
        return _simulate_free(bundle, p)
    if mode == "conditional":
        return _simulate_conditional(bundle, p)
    return _simulate_mean_field(bundle, p)


def _simulate_free(bundle, p):
    model, init = bundle.model, bundle.initial
    t, reps, seed = p["t"], p["replicas"], p["seed"]
    res = ExperimentResult("simulate", p)
    out = map_replicas(partial(_free_motion_replica, model=model, t=t, init=init,
                                master_seed=seed), reps, p.get("threads", 1))
    tab = Table(["replica", "seed", "terminal_state", "n_jumps"])
    for r, (s, x, k) in enumerate(out):
        tab.rows.append([r, s, _state_cell(x), k])
    res.tables["replicas"] = tab
    if isinstance(model, FiniteCtmcModel):
        exact = transition_row(model, init, t)
        term = np.array([x for _, x, _ in out])
        for y in range(model.size):
            freq = float(np.mean(term == y))
            se = math.sqrt(max(exact[y] * (1 - exact[y]), 1e-300) / reps)
            chk, z = _z_check(f"terminal_law[{y}]", freq, se, float(exact[y]))
            res.checks.append(chk)
            res.estimates.append({"name": f"P(X_t={y})", "mean": freq, "std_error": se,
                                  "exact": float(exact[y]), "z": z})
    return res


def _simulate_conditional(bundle, p):
    model, init = bundle.model, bundle.initial
    t, reps, seed = p["t"], p["replicas"], p["seed"]
    res = ExperimentResult("simulate", p)
    tab = Table(["n", "replica", "seed", "frozen_targets", "peer_targets"])
    for n in _listify(p["N"]):
        out = map_replicas(partial(_conditional_replica, model=model, n=n, t=t, init=init,
                                    master_seed=seed * 1000 + n), reps, p.get("threads", 1))
        frozen = sum(o[1] for o in out)
        total = frozen + sum(o[2] for o in out)
        for r, (s, a, b) in enumerate(out):
            tab.rows.append([n, r, s, a, b])
        target = 2.0 / n
        if total == 0:
            res.checks.append(Check(f"frozen_fraction[n={n}]", False, "no selection events"))
            continue
        frac = frozen / total
        se = math.sqrt(target * (1 - target) / total)
        chk, z = _z_check(f"frozen_fraction[n={n}]", frac, se, target)
        res.checks.append(chk)
        res.estimates.append({"name": f"frozen_fraction[n={n}]", "mean": frac, "std_error": se,
                              "exact": target, "events": total, "z": z})
    res.tables["replicas"] = tab
    return res


def _simulate_mean_field(bundle, p):
    model, init = bundle.model, bundle.initial
    reps, seed = p["replicas"], p["seed"]
    finite = isinstance(model, FiniteCtmcModel)
    res = ExperimentResult("simulate", p)
    states = list(range(model.size)) if finite else []
    fns = [Terminal(Indicator(x)) for x in states]
    names = [f"m(1_{{x={x}}})" for x in states]
    tab = Table(["n", "t", "replica", "seed", "weight", *names])
    for t in _listify(p["t"]):
        sol = solve_gamma(model, bundle.gamma0, t) if finite else None
        for n in _listify(p["N"]):
            rows = mean_field_replicas(model, n, t, init, fns, reps, seed * 1000 + n,
                                       p.get("threads", 1))
            for row in rows:
                tab.rows.append([n, t, row.replica_id, row.seed, row.weight, *row.values])
            if not finite:
                est = MonteCarloEstimate.from_samples([r.weight for r in rows])
                res.estimates.append({"name": f"Z[n={n},t={t}]", **est.to_record()})
                continue
            targets = [(f"gamma(1_{{x={x}}})", [r.weight * r.values[k] for r in rows],
                        float(sol.gamma[x])) for k, x in enumerate(states)]
            targets.append(("gamma(1)", [r.weight for r in rows], sol.z))
            for name, vals, exact in targets:
                est = MonteCarloEstimate.from_samples(vals)
                label = f"{name}[n={n},t={t}]"
                chk, z = _z_check(label, est.mean, est.std_error, exact)
                res.checks.append(chk)
                res.estimates.append({"name": label, **est.to_record(), "exact": exact, "z": z})
    res.tables["replicas"] = tab
    return res


def _state_cell(x):
    if isinstance(x, tuple):
        return " ".join(repr(v) for v in x)
    return x


# -- duality -------------------------------------------------------------------------


def run_duality(bundle, p: dict) -> ExperimentResult:
    model, init = bundle.model, bundle.initial
    n, t = p["N"], p["t"]
    state = p.get("state", 1)
    battery = default_duality_battery(t, state=state, other=p.get("other_state", 0))
    report = duality_check(model, n, t, battery, p["replicas"], p["seed"], init,
                           p.get("threads", 1))
    res = ExperimentResult("duality", p)
    tab = Table(["functional", "lhs", "lhs_se", "rhs", "rhs_se", "combined_se", "z"])
    z_max, marginal = p.get("z_max", 3.0), p.get("z_marginal", 3.5)
    allowed = p.get("allowed_marginal", 1)
    for row in report.rows:
        tab.rows.append([row.name, row.lhs, row.lhs_se, row.rhs, row.rhs_se, row.combined_se, row.z])
        res.estimates.append({"name": row.name, "lhs": row.lhs, "rhs": row.rhs,
                              "combined_se": row.combined_se, "z": row.z})
        res.checks.append(Check(f"duality[{row.name}]", abs(row.z) <= marginal,
                                f"lhs {row.lhs:.6g} rhs {row.rhs:.6g} z = {row.z:+.2f}",
                                status="PASS" if abs(row.z) <= z_max else
                                ("MARGINAL" if abs(row.z) <= marginal else "FAIL")))
    n_marg = sum(abs(z) > z_max for z in report.z_scores())
    res.checks.append(Check("duality_battery", report.passes(z_max, marginal, allowed),
                            f"{len(report.rows)} functionals, {n_marg} above {z_max} "
                            f"(allowed {allowed} up to {marginal})"))
    res.tables["duality"] = tab
    return res


# -- gibbs ---------------------------------------------------------------------------


def gibbs_functionals(t: float, state: int = 1):
    hi = Indicator(state)
    term = Terminal(hi, name="terminal_hi")
    occ = TimeIntegral(TimeFree(hi), True, name="occupation_hi")
    jumps = JumpCount(name="jumps")
    mid = StateAt(0.5 * t, hi, name="mid_hi")
    lo_end = Terminal(Indicator(1 - state if state in (0, 1) else 0), name="terminal_lo")
    return [term, occ, jumps, mid, lo_end]


GIBBS_PAIRS = [(0, 1), (0, 2), (1, 2), (3, 0), (3, 2)]


def run_gibbs(bundle, p: dict) -> ExperimentResult:
    model, init = bundle.model, bundle.initial
    n, t, seed = p["N"], p["t"], p["seed"]
    iters, burn = p["iters"], p.get("burn_in", 0)
    state = p.get("state", 1)
    fns = gibbs_functionals(t, state)
    aux = RandomStream.for_replica(seed, TAG_AUX, 0)
    x0 = sample_free_motion(model, init.sampler(model.space)(aux), 0.0, t, aux)
    trace = gibbs_chain(model, n, t, x0, iters + burn, fns,
                        RandomStream.for_replica(seed, TAG_GIBBS, 0), init).after(burn)
    res = ExperimentResult("gibbs", p)
    tab = Table(["iteration", *trace.names])
    for k, row in enumerate(trace.values):
        tab.rows.append([burn + k + 1, *row.tolist()])
    res.tables["chain"] = tab
    sol = solve_gamma(model, bundle.gamma0, t)
    occ_exact = smoothing_integral(model, bundle.gamma0, TimeFree(Indicator(state)), t)
    for name, exact in (("terminal_hi", float(sol.eta[state])), ("occupation_hi", occ_exact)):
        col = trace.column(name)
        se = mcse(col)
        chk, z = _z_check(f"chain_mean[{name}]", float(col.mean()), se, exact)
        res.checks.append(chk)
        res.estimates.append({"name": name, "mean": float(col.mean()), "std_error": se,
                              "exact": exact, "tau_int": integrated_autocorrelation_time(col),
                              "z": z})
    for a, b in GIBBS_PAIRS:
        gap = symmetry_gap(trace.values[:, a], trace.values[:, b], trace.names[a], trace.names[b])
        label = f"symmetry[{gap.f_name},{gap.g_name}]"
        res.checks.append(Check(label, abs(gap.z) <= 3.0,
                                f"gap {gap.gap:+.4g} se {gap.std_error:.3g} z = {gap.z:+.2f}"))
        res.estimates.append({"name": label, "mean": gap.gap, "std_error": gap.std_error,
                              "z": gap.z})
    return res


# -- bias sweep --------------------------------------------------------------------


def run_bias_sweep(bundle, p: dict) -> ExperimentResult:
    model, init = bundle.model, bundle.initial
    t, state = p["t"], p.get("state", 1)
    rows = bias_sweep(model, t, Terminal(Indicator(state)), p["N_list"], p["replicas"],
                      p["seed"], init, p.get("threads", 1))
    res = ExperimentResult("bias-sweep", p)
    tab = Table(["n", "replicas", "mean", "bias", "std_error"])
    by_n = {}
    for r in rows:
        tab.rows.append([r.n, r.replicas, r.mean, r.bias, r.std_error])
        res.estimates.append({"name": f"bias[n={r.n}]", "mean": r.bias, "std_error": r.std_error,
                              "n_replicas": r.replicas})
        by_n[r.n] = r
    lo, hi = p.get("ratio_bounds", [1.5, 2.7])
    pairs = [(n, 2 * n) for n in sorted(by_n) if 2 * n in by_n]
    for a, b in pairs:
        v = bias_scaling_verdict(by_n[a], by_n[b], lo, hi, p.get("snr", 4.0))
        status = {"pass": "PASS", "fail": "FAIL", "inconclusive": "INCONCLUSIVE"}[v.status]
        res.checks.append(Check(f"bias_ratio[{a}/{b}]", v.status != "fail",
                                f"{v.detail}, se {v.ratio_std_error:.3g}"
                                if v.status != "inconclusive" else
                                f"{v.detail}; |bias| <= 3 SE at both N (inconclusive-for-rate)",
                                status=status))
        res.estimates.append({"name": f"ratio[{a}/{b}]", "mean": v.ratio,
                              "std_error": v.ratio_std_error, "verdict": v.status})
    if not pairs:
        res.checks.append(Check("bias_ratio", False, "N_list holds no (N, 2N) pair"))
    res.tables["bias"] = tab
    return res


# -- jarzynski -----------------------------------------------------------------------


def run_jarzynski(bundle, p: dict) -> ExperimentResult:
    model = bundle.model
    pot = model.potential_fn
    out = jarzynski_experiment(pot.energies, pot.schedule, p["t"], p["N"], p["replicas"],
                               p["seed"], rates_fn=model.rate_matrix_fn, rate_sup=model.rate_sup,
                               threads=p.get("threads", 1))
    res = ExperimentResult("jarzynski", p)
    est = out.estimate
    chk, z = _z_check("free_energy_ratio", est.mean, est.std_error, out.exact_ratio)
    res.checks.append(chk)
    res.checks.append(Check("oracle_identity", out.identity_residual <= 1e-8,
                            f"residual {out.identity_residual:.3e} (<= 1e-8)"))
    res.checks.append(Check("stationarity", True,
                            f"max |pi_beta L_beta| = {out.stationarity_residual:.3e} (<= 1e-10)"))
    res.estimates.append({"name": "Z_ratio", **est.to_record(), "exact": out.exact_ratio,
                          "oracle_z": out.oracle_z, "z": z})
    tab = Table(["quantity", "value"])
    tab.rows += [["estimate", est.mean], ["std_error", est.std_error],
                 ["exact_ratio", out.exact_ratio], ["oracle_z", out.oracle_z],
                 ["identity_residual", out.identity_residual]]
    res.tables["jarzynski"] = tab
    return res


# -- regularity conditions -----------------------------------------------------------


def brute_force_h2(model, s: float, t: float) -> float:
    """Pairwise maximum of ``log Q(1)(x) - log Q(1)(y)`` by explicit double loop."""
    q = semigroup_matrix(model, s, t)
    ones = [float(sum(row)) for row in q]
    best = -math.inf
    for a in ones:
        for b in ones:
            best = max(best, math.log(a / b))
    return best


def run_check_conditions(bundle, p: dict) -> ExperimentResult:
    model = bundle.model
    res = ExperimentResult("check-conditions", p)
    h = p.get("h", 1.0)
    s, t = p.get("s", 0.0), p.get("t", 1.0)
    rho = check_h0_doeblin(model, s, h)
    res.checks.append(Check("h0_doeblin", rho > 0.0, f"rho = {rho:.6g} (> 0)"))
    h2 = check_h2_q(model, s, t)
    brute = brute_force_h2(model, s, t)
    res.checks.append(Check("h2_q", h2 == brute, f"log-ratio bound {h2:.12g}, brute force {brute:.12g}"))
    res.estimates += [{"name": "h0_rho", "value": rho}, {"name": "h2_q", "value": h2}]
    stream = RandomStream.for_replica(p["seed"], TAG_AUX, 0)
    tab = Table(["n", "configs", "max_residual"])
    for n in p.get("n_list", [3, 5, 10]):
        worst = 0.0
        for _ in range(p.get("identity_configs", 1000)):
            f = stream.normal(model.size)
            v = np.abs(stream.normal(model.size))
            cfg = [stream.index(model.size) for _ in range(n)]
            worst = max(worst, dual_generator_identity_check(n, f.__getitem__, cfg, v.__getitem__))
        tab.rows.append([n, p.get("identity_configs", 1000), worst])
        res.checks.append(Check(f"dual_generator_identity[n={n}]", worst <= 1e-12,
                                f"max residual {worst:.3e} (<= 1e-12)"))
    res.tables["identity"] = tab
    return res


RUNNERS = {
    "oracle": run_oracle,
    "simulate": run_simulate,
    "duality": run_duality,
    "gibbs": run_gibbs,
    "bias-sweep": run_bias_sweep,
    "jarzynski": run_jarzynski,
    "check-conditions": run_check_conditions,
}
