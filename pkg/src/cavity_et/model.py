"""Physical parameter set shared by every simulation layer.

All rates and energies are expressed in units of a reference rate kappa0
(typically the cavity decay rate itself); times are in units of 1/kappa0.
Converting to physical units is a documentation exercise only: e.g. with
kappa0 = 1 eV, a time of 1e6 corresponds to ~0.66 ns.

Each donor-acceptor pair is a 4-level unit |G>, |D>, |A>, |F>; the cavity
photon mode couples |G> <-> |D| with single-pair strength ``g``.  The
incoherent channels are cavity pumping/decay (kappa_plus, kappa), per-pair
pumping/decay (gamma_plus, gamma) and acceptor relaxation into |F> (eta).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass


class ParameterError(ValueError):
    """A parameter set (or parameter file) violates a model invariant."""


#: The nine physical fields, in canonical order.  Parameter files must carry
#: exactly these keys; anything else (apart from RUN_KEYS) is rejected so
#: typos cannot silently fall back to defaults.
PARAM_FIELDS = (
    "g",
    "kappa",
    "kappa_plus",
    "gamma",
    "gamma_plus",
    "eta",
    "delta",
    "V",
    "N_total",
)

#: Optional non-physical keys allowed alongside the fields in a parameter
#: file.  ``unit`` is documentation only; the rest configure runs.
RUN_KEYS = ("unit", "seed", "n_trajectories", "t_max", "dt")


@dataclass(frozen=True)
class ModelParams:
    """Immutable model parameters in kappa0 units.

    Attributes:
        g: single-pair cavity coupling (>= 0).
        kappa: cavity decay rate (> 0).
        kappa_plus: incoherent cavity pump rate (>= 0).
        gamma: single-pair decay rate |D> -> |G> (>= 0).
        gamma_plus: single-pair pump rate |G> -> |D> (>= 0).
        eta: acceptor relaxation rate |A> -> |F> (> 0).
        delta: donor-acceptor detuning (may be negative).
        V: donor-acceptor tunneling amplitude (may be negative).
        N_total: total number of donor-acceptor pairs (>= 1).
    """

    g: float
    kappa: float
    kappa_plus: float
    gamma: float
    gamma_plus: float
    eta: float
    delta: float
    V: float
    N_total: int

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)


def validate(params: ModelParams) -> ModelParams:
    """Return ``params`` unchanged if all invariants hold, else raise.

    eta = 0 is rejected deliberately: without acceptor relaxation the
    transfer rate is identically zero and the jump process never fires.
    """
    for name in ("g", "kappa_plus", "gamma", "gamma_plus"):
        value = getattr(params, name)
        if not math.isfinite(value) or value < 0:
            raise ParameterError(f"{name} must be finite and >= 0, got {value!r}")
    for name in ("kappa", "eta"):
        value = getattr(params, name)
        if not math.isfinite(value) or value <= 0:
            raise ParameterError(f"{name} must be finite and > 0, got {value!r}")
    for name in ("delta", "V"):
        value = getattr(params, name)
        if not math.isfinite(value):
            raise ParameterError(f"{name} must be finite, got {value!r}")
    n = params.N_total
    if not isinstance(n, (int,)) or isinstance(n, bool):
        raise ParameterError(f"N_total must be an integer, got {n!r}")
    if n < 1:
        raise ParameterError(f"N_total must be >= 1, got {n}")
    return params


def collective_coupling(params: ModelParams, M: int) -> float:
    """Effective coupling g*sqrt(M) of the symmetric mode at M ground pairs.

    The rate formula depends on the pair count only through this combination
    (pairs already transferred to |F> decouple completely), so M is the
    instantaneous ground-state count, not N_total.
    """
    if M < 0:
        raise ParameterError(f"M must be >= 0, got {M}")
    return params.g * math.sqrt(M)


def params_from_dict(doc: dict) -> ModelParams:
    """Build validated ModelParams from a flat parameter document.

    Unknown keys raise ParameterError naming the key; run-level keys
    (seed, n_trajectories, t_max, dt, unit) are tolerated and ignored here.
    """
    if not isinstance(doc, dict):
        raise ParameterError(f"parameter document must be a mapping, got {type(doc).__name__}")
    unknown = [k for k in doc if k not in PARAM_FIELDS and k not in RUN_KEYS]
    if unknown:
        raise ParameterError(f"unknown parameter key {unknown[0]!r}")
    missing = [k for k in PARAM_FIELDS if k not in doc]
    if missing:
        raise ParameterError(f"missing parameter key {missing[0]!r}")
    kwargs = {}
    for name in PARAM_FIELDS:
        value = doc[name]
        if name == "N_total":
            if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
                raise ParameterError(f"N_total must be an integer, got {value!r}")
            kwargs[name] = int(value)
        else:
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParameterError(f"{name} must be a number, got {value!r}")
            kwargs[name] = float(value)
    return validate(ModelParams(**kwargs))
