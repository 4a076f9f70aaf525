"""Built-in models and the loader turning config fragments into models."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .models import (
    ConstantRates,
    ConstantVector,
    CosinePotential,
    FiniteCtmcModel,
    InitialLaw,
    JarzynskiPotential,
    LinearInState,
    LinearSchedule,
    MetropolisRates,
    PowerSchedule,
    SineDrift,
    TorusDiffusionModel,
)


class ModelSpecError(ValueError):
    """A model fragment is malformed; ``path`` names the offending key."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


@dataclass(frozen=True)
class ModelBundle:
    model: object
    initial: InitialLaw
    fragment: dict

    @property
    def gamma0(self) -> np.ndarray:
        return self.initial.vector(self.model.size)


M2_RATES = ((-1.0, 1.0), (2.0, -2.0))
M2_POTENTIAL = (0.0, 1.0)

CATALOG = {
    "m2": {
        "description": "canonical 2-state chain: rate 0->1 = 1, 1->0 = 2; V = (0, 1); X_0 = 0",
        "fragment": {
            "kind": "finite",
            "rates": [list(r) for r in M2_RATES],
            "potential": {"type": "constant-vector", "values": list(M2_POTENTIAL)},
            "initial": {"kind": "dirac", "state": 0},
        },
    },
    "ring4": {
        "description": "4-state ring, unit rate to each neighbour; V(x) = x / 3; X_0 uniform",
        "fragment": {
            "kind": "finite",
            "rates": [[-2, 1, 0, 1], [1, -2, 1, 0], [0, 1, -2, 1], [1, 0, 1, -2]],
            "potential": {"type": "linear-in-state", "slope": 1.0 / 3.0, "intercept": 0.0},
            "initial": {"kind": "uniform"},
        },
    },
    "jarzynski2": {
        "description": ("2-state Metropolis chain reversible w.r.t. exp(-beta_t H), H = (0, 1), "
                        "beta_t = t; V_t = beta'_t H; X_0 ~ pi_{beta_0}"),
        "fragment": {
            "kind": "jarzynski",
            "energies": [0.0, 1.0],
            "schedule": {"type": "linear", "beta0": 0.0, "rate": 1.0},
            "base_rate": 1.0,
            "t_max": 1.0,
        },
    },
    "torus1d": {
        "description": ("Euler-Maruyama diffusion on the circle, drift -sin(2 pi x), sigma 0.5, "
                        "step 0.01; V = (1 + cos 2 pi x) / 2; X_0 uniform (approximate model)"),
        "fragment": {
            "kind": "torus",
            "dimension": 1,
            "drift": {"type": "sine", "strength": 1.0},
            "diffusion_coeff": 0.5,
            "euler_step": 0.01,
            "potential": {"type": "cosine", "amplitude": 1.0},
            "initial": {"kind": "uniform"},
        },
    },
}


def list_builtin_models() -> list[dict]:
    """Catalog entries with their ``potential_sup`` and config fragment."""
    out = []
    for name, entry in CATALOG.items():
        bundle = load_model(entry["fragment"])
        out.append({
            "name": name,
            "description": entry["description"],
            "potential_sup": bundle.model.potential_sup,
            "fragment": entry["fragment"],
        })
    return out


def m2() -> ModelBundle:
    return load_model({"builtin": "m2"})


def _need(frag: dict, key: str, path: str):
    if key not in frag:
        raise ModelSpecError(f"{path}.{key}", "missing required key")
    return frag[key]


def _number(value, path: str, positive: bool = False, nonnegative: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ModelSpecError(path, f"expected a finite number, got {value!r}")
    if positive and value <= 0:
        raise ModelSpecError(path, f"must be > 0, got {value}")
    if nonnegative and value < 0:
        raise ModelSpecError(path, f"must be >= 0, got {value}")
    return float(value)


def _initial(frag, size: int | None, path: str) -> InitialLaw:
    if frag is None:
        return InitialLaw.uniform()
    kind = _need(frag, "kind", path)
    try:
        if kind == "dirac":
            state = _need(frag, "state", path)
            if size is not None and not (isinstance(state, int) and 0 <= state < size):
                raise ModelSpecError(f"{path}.state", f"must be an integer in [0, {size})")
            return InitialLaw.dirac(state if size is not None else tuple(state))
        if kind == "categorical":
            return InitialLaw.categorical(_need(frag, "weights", path))
        if kind == "uniform":
            return InitialLaw.uniform()
    except ValueError as exc:
        if isinstance(exc, ModelSpecError):
            raise
        raise ModelSpecError(path, str(exc)) from None
    raise ModelSpecError(f"{path}.kind", f"unknown initial law {kind!r}")


def _schedule(frag, path):
    kind = _need(frag, "type", path)
    if kind == "linear":
        return LinearSchedule(_number(frag.get("beta0", 0.0), f"{path}.beta0"),
                              _number(frag.get("rate", 1.0), f"{path}.rate"))
    if kind == "power":
        return PowerSchedule(_number(frag.get("beta0", 0.0), f"{path}.beta0"),
                             _number(frag.get("scale", 1.0), f"{path}.scale"),
                             _number(frag.get("power", 2.0), f"{path}.power", positive=True))
    raise ModelSpecError(f"{path}.type", f"unknown schedule {kind!r}")


def load_model(frag: dict, path: str = "model") -> ModelBundle:
    """Build a model and its initial law from a config fragment."""
    if not isinstance(frag, dict):
        raise ModelSpecError(path, "expected a mapping")
    if "builtin" in frag:
        name = frag["builtin"]
        if name not in CATALOG:
            raise ModelSpecError(f"{path}.builtin", f"unknown built-in model {name!r}")
        merged = {"name": name, **CATALOG[name]["fragment"]}
        merged.update({k: v for k, v in frag.items() if k != "builtin"})
        bundle = load_model(merged, path)
        return ModelBundle(bundle.model, bundle.initial, {"builtin": name, **frag})
    kind = _need(frag, "kind", path)
    if kind == "finite":
        model = _finite(frag, path)
        init = _initial(frag.get("initial"), model.size, f"{path}.initial")
    elif kind == "jarzynski":
        model = _jarzynski(frag, path)
        h = np.asarray(model.potential_fn.energies, dtype=float)
        beta0 = model.potential_fn.schedule(0.0)
        w = np.exp(-beta0 * (h - h.min()))
        init = InitialLaw.categorical((w / w.sum()).tolist())
        if "initial" in frag:
            init = _initial(frag["initial"], model.size, f"{path}.initial")
    elif kind == "torus":
        model = _torus(frag, path)
        init = _initial(frag.get("initial"), None, f"{path}.initial")
    else:
        raise ModelSpecError(f"{path}.kind", f"unknown model kind {kind!r}")
    return ModelBundle(model, init, frag)


def _finite(frag, path) -> FiniteCtmcModel:
    rates = _need(frag, "rates", path)
    try:
        q = np.asarray(rates, dtype=float)
    except (TypeError, ValueError):
        raise ModelSpecError(f"{path}.rates", "expected a square matrix of numbers") from None
    if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 2:
        raise ModelSpecError(f"{path}.rates", "expected a square matrix of size >= 2")
    off = q - np.diag(np.diag(q))
    if np.any(off < 0) or np.any(np.abs(q.sum(axis=1)) > 1e-9):
        raise ModelSpecError(f"{path}.rates", "off-diagonals must be >= 0 and rows sum to 0")
    k = q.shape[0]
    pot = _need(frag, "potential", path)
    ptype = _need(pot, "type", f"{path}.potential")
    if ptype == "constant-vector":
        values = _need(pot, "values", f"{path}.potential")
        if not isinstance(values, list) or len(values) != k:
            raise ModelSpecError(f"{path}.potential.values", f"expected {k} numbers")
        v = tuple(_number(x, f"{path}.potential.values", nonnegative=True) for x in values)
        fn = ConstantVector(v)
    elif ptype == "linear-in-state":
        slope = _number(pot.get("slope", 1.0), f"{path}.potential.slope")
        icpt = _number(pot.get("intercept", 0.0), f"{path}.potential.intercept")
        v = tuple(icpt + slope * x for x in range(k))
        if min(v) < 0:
            raise ModelSpecError(f"{path}.potential", "linear potential takes negative values")
        fn = LinearInState(slope, icpt)
    else:
        raise ModelSpecError(f"{path}.potential.type", f"unknown potential {ptype!r}")
    rate_sup = frag.get("rate_sup")
    exit_max = float(np.max(-np.diag(q)))
    if rate_sup is None:
        rate_sup = exit_max
    else:
        rate_sup = _number(rate_sup, f"{path}.rate_sup", nonnegative=True)
        if rate_sup < exit_max:
            raise ModelSpecError(f"{path}.rate_sup", f"must be >= max exit rate {exit_max}")
    return FiniteCtmcModel(
        size=k,
        rate_matrix_fn=ConstantRates(tuple(map(tuple, q.tolist()))),
        potential_fn=fn,
        potential_sup=max(v),
        rate_sup=rate_sup,
        rates_time_homogeneous=True,
        potential_time_constant=True,
        name=frag.get("name", "finite"),
    )


def _jarzynski(frag, path) -> FiniteCtmcModel:
    energies = _need(frag, "energies", path)
    if not isinstance(energies, list) or len(energies) < 2:
        raise ModelSpecError(f"{path}.energies", "expected at least 2 numbers")
    h = tuple(_number(x, f"{path}.energies", nonnegative=True) for x in energies)
    sched = _schedule(_need(frag, "schedule", path), f"{path}.schedule")
    base = _number(frag.get("base_rate", 1.0), f"{path}.base_rate", positive=True)
    t_max = _number(_need(frag, "t_max", path), f"{path}.t_max", positive=True)
    return FiniteCtmcModel(
        size=len(h),
        rate_matrix_fn=MetropolisRates(h, sched, base),
        potential_fn=JarzynskiPotential(h, sched),
        potential_sup=sched.derivative_sup(t_max) * max(h),
        rate_sup=base,
        rates_time_homogeneous=False,
        potential_time_constant=isinstance(sched, LinearSchedule),
        name=frag.get("name", "jarzynski"),
    )


def _torus(frag, path) -> TorusDiffusionModel:
    dim = _need(frag, "dimension", path)
    if not isinstance(dim, int) or dim < 1:
        raise ModelSpecError(f"{path}.dimension", "must be an integer >= 1")
    drift = _need(frag, "drift", path)
    if drift.get("type") != "sine":
        raise ModelSpecError(f"{path}.drift.type", "only 'sine' drift is built in")
    pot = _need(frag, "potential", path)
    if pot.get("type") != "cosine":
        raise ModelSpecError(f"{path}.potential.type", "only 'cosine' potential is built in")
    amp = _number(pot.get("amplitude", 1.0), f"{path}.potential.amplitude", nonnegative=True)
    return TorusDiffusionModel(
        dimension=dim,
        drift_fn=SineDrift(_number(drift.get("strength", 1.0), f"{path}.drift.strength")),
        diffusion_coeff=_number(_need(frag, "diffusion_coeff", path), f"{path}.diffusion_coeff",
                                positive=True),
        euler_step=_number(_need(frag, "euler_step", path), f"{path}.euler_step", positive=True),
        potential_fn=CosinePotential(amp),
        potential_sup=amp,
        potential_time_constant=True,
        name=frag.get("name", "torus"),
    )
