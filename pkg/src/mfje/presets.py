"""Named model presets selectable from experiment configs.

User-defined kernels are code-level extensions; configs can only select one
of the presets here and set its parameters.
"""

from __future__ import annotations

import numpy as np

from .curves import PiecewiseLinear
from .errors import ConfigError
from .insurance_life import PaymentStream, SirdSpec
from .insurance_nonlife import GammaClaimsSpec
from .kernel import DestinationKernel, IntensityKernel, StateSpace, jd_to_js

PRESET_NAMES = ("sird", "gamma-claims", "constant-rate")


def _knots(model: dict, key, default):
    try:
        value = model.get(key, default)
        return PiecewiseLinear.from_knots(value)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model.{key}: {exc}") from exc


def sird_spec(model: dict) -> SirdSpec:
    death = model.get("death_rates", [0.05, 0.3, 0.05])
    if len(death) != 3:
        raise ConfigError("model.death_rates must list three rates")
    try:
        return SirdSpec(
            beta1=_knots(model, "beta1", 3.0),
            recovery_rate=_knots(model, "recovery_rate", 1.0),
            death_rates=tuple(PiecewiseLinear.from_knots(d) for d in death),
            initial_pmf=model.get("initial_pmf", [0.9, 0.1, 0.0, 0.0]),
            horizon=tuple(model.get("horizon", [0.0, 1.0])),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def sird_payments(spec: SirdSpec, model: dict) -> PaymentStream:
    pay = model.get("payments", {})
    discount = model.get("discount", 0.0)
    try:
        if "sojourn" in pay:
            return PaymentStream.per_state(
                spec.space, pay["sojourn"], pay.get("transition"), discount)
        return PaymentStream.premium_benefit(
            spec.space, float(pay.get("pi", 0.0)), float(pay.get("b", 0.0)),
            discount)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"model.payments: {exc}") from exc


def gamma_claims_spec(model: dict) -> GammaClaimsSpec:
    try:
        return GammaClaimsSpec(
            alpha=float(model.get("alpha", 2.0)),
            theta_star=float(model.get("theta_star", 0.5)),
            theta_min=float(model.get("theta_min", 0.05)),
            theta_max=float(model.get("theta_max", 5.0)),
            cap_K=float(model.get("cap_K", 100.0)),
            claim_rate=float(model.get("claim_rate", 2.0)),
            weight_fn=_knots(model, "weight_fn", 0.0),
            horizon=tuple(model.get("horizon", [0.0, 1.0])),
            covariate_law=model.get("covariate_law"),
        )
    except ValueError as exc:
        raise ConfigError(f"model: {exc}") from exc


def constant_rate_kernel(model: dict) -> IntensityKernel:
    """Two-state chain jumping 1 -> 2 at a constant rate."""
    rate = float(model.get("rate", 0.5))
    if rate < 0:
        raise ConfigError("model.rate must be nonnegative")
    space = StateSpace.finite([[1.0], [2.0]], labels=["state1", "state2"])
    table = np.array([[0.0, rate], [0.0, 0.0]])
    dk = DestinationKernel(space=space, rates=lambda t, rho: table,
                           c_lambda=rate, c_r=1.0, q=2.0, c_mu=0.0,
                           measure_dependent=False)
    return jd_to_js(dk)


def build_kernel(preset: str, model: dict) -> IntensityKernel:
    if preset == "sird":
        return sird_spec(model).kernel()
    if preset == "gamma-claims":
        return gamma_claims_spec(model).kernel()
    if preset == "constant-rate":
        return constant_rate_kernel(model)
    raise ConfigError(f"unknown preset {preset!r}; expected one of "
                      f"{', '.join(PRESET_NAMES)}")
