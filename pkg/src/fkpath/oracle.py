"""Exact finite-state Feynman-Kac quantities.

Everything here is deterministic linear algebra on a finite state space:

* the unnormalised flow ``d/dt gamma_t = gamma_t (L_t - V_t)`` and its
  semigroup ``Q_{s,t}``, integrated with an adaptive Runge-Kutta scheme and,
  for time-homogeneous models, cross-checked against a matrix exponential;
* smoothing expectations ``E_Q[int_0^t g(s, X_s) ds]``;
* the free-energy identity ``Z_t = exp(-int_0^t eta_s(V_s) ds)`` computed
  through the normalised (nonlinear) flow;
* product-space generators of the N-particle and frozen-line systems, which
  give exact time-marginals of those systems for small ``K**N``.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.integrate import solve_ivp
from scipy.sparse.linalg import expm_multiply

from .errors import NumericError

DEFAULT_RTOL = 1e-10


def expm(a: np.ndarray) -> np.ndarray:
    """Matrix exponential by scaling and squaring with a truncated Taylor series.

    The matrix is scaled so that its 1-norm is at most 1/2; 24 Taylor terms
    then leave a truncation error below 1e-30 relative to the scaled norm.
    """
    a = np.asarray(a, dtype=float)
    norm = np.abs(a).sum(axis=0).max() if a.size else 0.0
    squarings = max(0, int(math.ceil(math.log2(norm / 0.5)))) if norm > 0.5 else 0
    b = a / (2.0 ** squarings)
    out = np.eye(a.shape[0])
    term = np.eye(a.shape[0])
    for k in range(1, 25):
        term = term @ b / k
        out = out + term
    for _ in range(squarings):
        out = out @ out
    return out


@dataclass
class OracleSolution:
    gamma: np.ndarray
    eta: np.ndarray
    z: float
    t: float
    grid: np.ndarray
    expm_residual: float | None = None

    def to_record(self, model=None) -> dict:
        rec = {
            "gamma": self.gamma.tolist(),
            "eta": self.eta.tolist(),
            "z": self.z,
            "t": self.t,
        }
        if model is not None:
            rec["model_hash"] = model_hash(model)
        return rec

    def to_json(self, model=None) -> str:
        return json.dumps(self.to_record(model), sort_keys=True)


def model_hash(model) -> str:
    return hashlib.sha256(repr(model).encode()).hexdigest()[:16]


def _ivp(fun, t0, t1, y0, rtol, t_eval=None):
    if t1 == t0:
        return np.asarray(y0, dtype=float)[:, None]
    sol = solve_ivp(fun, (t0, t1), np.asarray(y0, dtype=float), method="DOP853",
                    rtol=rtol, atol=rtol * 1e-3, t_eval=t_eval)
    if not sol.success:
        raise NumericError(f"ODE solve failed on [{t0}, {t1}]: {sol.message}")
    return sol.y


def _gen(model, with_potential: bool):
    if with_potential:
        return model.generator_with_potential
    return model.rate_matrix


def solve_gamma(model, gamma0, t: float, rtol: float = DEFAULT_RTOL) -> OracleSolution:
    """``gamma_t`` from ``gamma_0`` by integrating ``gamma' = gamma (L - V)``."""
    g0 = np.asarray(gamma0, dtype=float)
    if g0.shape != (model.size,) or np.any(g0 < 0):
        raise ValueError("gamma0 must be a nonnegative vector on the state space")
    gen = model.generator_with_potential
    y = _ivp(lambda s, g: g @ gen(s), 0.0, t, g0, rtol)[:, -1]
    residual = None
    if model.rates_time_homogeneous and model.potential_time_constant:
        exact = g0 @ expm(t * gen(0.0))
        residual = float(np.abs(exact - y).max())
    gamma = np.clip(y, 0.0, None)
    z = float(gamma.sum())
    if not z > 0:
        raise NumericError("gamma_t has vanishing mass")
    return OracleSolution(gamma=gamma, eta=gamma / z, z=z, t=float(t),
                          grid=np.array([0.0, t]), expm_residual=residual)


def semigroup_matrix(model, s: float, t: float, rtol: float = DEFAULT_RTOL,
                     with_potential: bool = True) -> np.ndarray:
    """``Q_{s,t}`` (or the Markov transition ``P_{s,t}`` with ``with_potential=False``)."""
    if t < s:
        raise ValueError(f"s={s} > t={t}")
    k = model.size
    if t == s:
        return np.eye(k)
    gen = _gen(model, with_potential)

    def rhs(u, y):
        return (y.reshape(k, k) @ gen(u)).ravel()

    return _ivp(rhs, s, t, np.eye(k).ravel(), rtol)[:, -1].reshape(k, k)


def _grid_values(model, gamma0, t, n, rtol):
    """``gamma_s`` and ``Q_{s,t}(1)`` on ``n + 1`` equispaced points of ``[0, t]``."""
    grid = np.linspace(0.0, t, n + 1)
    gen = model.generator_with_potential
    gam = _ivp(lambda s, g: g @ gen(s), 0.0, t, gamma0, rtol, t_eval=grid).T
    # backward equation d/ds h_s = -(L_s - V_s) h_s with h_t = 1
    rev = grid[::-1]
    h = _ivp(lambda s, y: -(gen(s) @ y), t, 0.0, np.ones(model.size), rtol, t_eval=rev).T[::-1]
    return grid, gam, h


def _simpson(values, t):
    n = len(values) - 1
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float(t / n / 3.0 * (w @ values))


def smoothing_integral(model, gamma0, g, t: float, rtol: float = DEFAULT_RTOL,
                       max_level: int = 14) -> float:
    """``E_Q[int_0^t g(s, X_s) ds]`` under the path Feynman-Kac measure.

    Equals ``(1/Z_t) int_0^t gamma_s(g_s * Q_{s,t}(1)) ds``; the time
    integral is composite Simpson on a dyadic grid, refined until two levels
    agree to ``rtol`` and then Richardson-extrapolated.
    """
    g0 = np.asarray(gamma0, dtype=float)
    if t == 0:
        return 0.0
    states = np.arange(model.size)
    z = solve_gamma(model, g0, t, rtol=min(rtol, DEFAULT_RTOL)).z
    ode_rtol = min(rtol, DEFAULT_RTOL) * 1e-2
    prev = None
    for level in range(3, max_level + 1):
        grid, gam, h = _grid_values(model, g0, t, 2 ** level, ode_rtol)
        vals = np.array([gam[i] @ (np.array([g(s, x) for x in states], dtype=float) * h[i])
                         for i, s in enumerate(grid)])
        cur = _simpson(vals, t)
        if prev is not None and abs(cur - prev) <= rtol * max(1.0, abs(cur)):
            return (cur + (cur - prev) / 15.0) / z
        prev = cur
    raise NumericError("smoothing quadrature did not converge")


@dataclass
class FreeEnergyCheck:
    z_linear: float
    z_nonlinear: float
    integrated_mean_potential: float

    @property
    def residual(self) -> float:
        return abs(self.z_linear - self.z_nonlinear)


def free_energy_check(model, gamma0, t: float, rtol: float = DEFAULT_RTOL) -> FreeEnergyCheck:
    """Compare ``Z_t = gamma_t(1)`` with ``Z_0 exp(-int_0^t eta_s(V_s) ds)``.

    The right-hand side integrates the normalised flow
    ``eta' = eta (L - V) + eta(V) eta`` together with ``eta_s(V_s)``.
    """
    g0 = np.asarray(gamma0, dtype=float)
    z0 = g0.sum()
    lin = solve_gamma(model, g0, t, rtol=rtol).z
    k = model.size
    gen = model.generator_with_potential
    pot = model.potential_vector

    def rhs(s, y):
        eta = y[:k]
        ev = eta @ pot(s)
        return np.concatenate([eta @ gen(s) + ev * eta, [ev]])

    y = _ivp(rhs, 0.0, t, np.concatenate([g0 / z0, [0.0]]), rtol)[:, -1]
    return FreeEnergyCheck(z_linear=lin, z_nonlinear=float(z0 * math.exp(-y[k])),
                           integrated_mean_potential=float(y[k]))


def free_energy_identity_check(model, gamma0, t: float, rtol: float = DEFAULT_RTOL) -> float:
    """Residual of the free-energy identity; contract: at most 1e-8."""
    return free_energy_check(model, gamma0, t, rtol).residual


# -- product-space oracles for the particle systems ---------------------------

MAX_PRODUCT_STATES = 4096


def _require_homogeneous(model):
    if not (model.rates_time_homogeneous and model.potential_time_constant):
        raise ValueError("product-space oracles need a time-homogeneous model")


def product_configs(size: int, n: int) -> list[tuple]:
    if size ** n > MAX_PRODUCT_STATES:
        raise ValueError(f"{size}**{n} configurations exceed {MAX_PRODUCT_STATES}")
    return list(itertools.product(range(size), repeat=n))


def particle_generator(model, n: int, frozen_first: bool = False):
    """Sparse generator of the N-particle system on ``S^n`` plus its weight rates.

    With ``frozen_first=False``: mean-field system, each particle jumps at
    rate ``V(x^i)`` onto a uniform particle (itself included); weight rate
    ``m(x)(V)``.  With ``frozen_first=True``: coordinate 0 moves as ``X``
    without selection, coordinates ``i >= 1`` jump at rate ``V(x^i)`` onto
    coordinate 0 w.p. ``2/n`` and otherwise onto a uniform peer
    ``j not in {0, i}``; weight rate ``V(x^0)``.
    """
    _require_homogeneous(model)
    k = model.size
    q = model.rate_matrix(0.0)
    v = model.potential_vector(0.0)
    configs = product_configs(k, n)
    radix = [k ** (n - 1 - i) for i in range(n)]
    rows, cols, vals = [], [], []

    def add(src, cfg, i, y, rate):
        if rate == 0.0 or cfg[i] == y:
            return
        dst = src + (y - cfg[i]) * radix[i]
        rows.append(src)
        cols.append(dst)
        vals.append(rate)

    weight = np.empty(len(configs))
    for src, cfg in enumerate(configs):
        for i in range(n):
            for y in range(k):
                if y != cfg[i]:
                    add(src, cfg, i, y, q[cfg[i], y])
            vi = v[cfg[i]]
            if frozen_first:
                if i == 0:
                    continue
                peers = [j for j in range(1, n) if j != i]
                add(src, cfg, i, cfg[0], vi * 2.0 / n)
                for j in peers:
                    add(src, cfg, i, cfg[j], vi * (1.0 - 2.0 / n) / len(peers))
            else:
                for j in range(n):
                    if j != i:
                        add(src, cfg, i, cfg[j], vi / n)
        weight[src] = v[cfg[0]] if frozen_first else v[list(cfg)].mean()
    m = len(configs)
    g = sparse.coo_matrix((vals, (rows, cols)), shape=(m, m)).tocsr()
    g = g - sparse.diags(np.asarray(g.sum(axis=1)).ravel())
    return configs, g.tocsr(), weight


def particle_marginals(model, n: int, t: float, eta0, frozen_first: bool = False):
    """Time-``t`` law of the particle configuration, plain and weighted.

    Returns ``(configs, p, w)`` where ``p`` is the law of the configuration
    started i.i.d. ``eta0`` and ``w`` the same law reweighted by the
    unnormalised exponential weight of the system (total mass ``Z_t``).
    """
    configs, g, weight = particle_generator(model, n, frozen_first)
    e0 = np.asarray(eta0, dtype=float)
    mu0 = np.array([np.prod(e0[list(c)]) for c in configs])
    p = expm_multiply((t * g).T.tocsr(), mu0)
    w = expm_multiply((t * (g - sparse.diags(weight))).T.tocsr(), mu0)
    return configs, p, w


def exact_mean_field_bias(model, n: int, t: float, f, eta0) -> float:
    """``E[m(xi_t)(f)] - eta_t(f)`` for the N-particle system, exactly."""
    configs, p, _ = particle_marginals(model, n, t, eta0)
    mean = sum(pi * np.mean([f(x) for x in c]) for pi, c in zip(p, configs))
    eta = solve_gamma(model, eta0, t).eta
    return float(mean - sum(eta[x] * f(x) for x in range(model.size)))


def exact_pair_correlation(model, n: int, t: float, f, g, eta0) -> float:
    """``E[f(xi^1_t) g(xi^2_t)] - eta_t(f) eta_t(g)`` for the N-particle system."""
    configs, p, _ = particle_marginals(model, n, t, eta0)
    joint = sum(pi * f(c[0]) * g(c[1]) for pi, c in zip(p, configs))
    eta = solve_gamma(model, eta0, t).eta
    ef = sum(eta[x] * f(x) for x in range(model.size))
    eg = sum(eta[x] * g(x) for x in range(model.size))
    return float(joint - ef * eg)
