"""
Convergence-rate diagnostics for merit traces.

e_k = L(x^{k+1}, x^k) − φ* is fitted against k (linear rate) and against log k
(power rate); the better R² picks the regime and a power exponent is turned back
into a KL exponent θ.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import stats

logger = logging.getLogger(__name__)

TRANSIENT_ROWS = 10
MIN_ROWS = 20


class RateFitError(Exception):
    """Raised when a trace has too few usable rows for a rate fit."""


class RateRegime(str, Enum):
    FINITE = "finite"
    LINEAR = "linear"
    SUBLINEAR_POWER = "sublinear_power"


@dataclass(slots=True)
class RateReport:
    regime: RateRegime
    r_squared: float | None
    Q: float | None = None
    exponent: float | None = None
    theta: float | None = None
    phi_star: float = 0.0
    phi_star_estimated: bool = False
    rows_used: int = 0

    def to_dict(self) -> dict:
        data = asdict(self)
        data["regime"] = self.regime.value
        return data


def exponent_from_theta(theta: float, kind: str = "value") -> float:
    """
    Power of k in the sublinear bound for θ ∈ (½, 1).

    kind="value": e_k ≲ k^{−1/(2θ−1)}; kind="sequence": ‖x^k − x*‖ ≲ k^{−(1−θ)/(2θ−1)}.
    """
    if not 0.5 < theta < 1.0:
        raise ValueError(f"theta must lie in (1/2, 1) for a power rate, got {theta!r}.")
    if kind == "value":
        return -1.0 / (2.0 * theta - 1.0)
    if kind == "sequence":
        return -(1.0 - theta) / (2.0 * theta - 1.0)
    raise ValueError(f"Unknown rate kind '{kind}'.")


def theta_from_exponent(exponent: float, kind: str = "value") -> float:
    if kind == "value":
        if not exponent < 0.0:
            raise ValueError(f"value exponents are negative, got {exponent!r}.")
        return 0.5 * (1.0 - 1.0 / exponent)
    if kind == "sequence":
        if not exponent < 0.0:
            raise ValueError(f"sequence exponents are negative, got {exponent!r}.")
        return (exponent - 1.0) / (2.0 * exponent - 1.0)
    raise ValueError(f"Unknown rate kind '{kind}'.")


def fit_rates(
    ks: Sequence[int],
    merits: Sequence[float],
    phi_star: float | None = None,
    skip: int = TRANSIENT_ROWS,
    min_rows: int = MIN_ROWS,
) -> RateReport:
    ks = np.asarray(ks, dtype=float)
    merits = np.asarray(merits, dtype=float)
    if ks.shape != merits.shape:
        raise ValueError("ks and merits must have the same length.")
    finite_rows = np.isfinite(merits)
    ks, merits = ks[finite_rows], merits[finite_rows]
    if merits.size == 0:
        raise RateFitError("trace has no finite merit values")

    estimated = phi_star is None
    floor = 1e3 * np.finfo(float).eps * max(1.0, abs(float(np.min(merits))))
    if estimated:
        phi_star = float(np.min(merits)) - floor
        logger.info("phi* estimated from the trace as %.17g", phi_star)
    errors = merits - phi_star
    ks, errors = ks[skip:], errors[skip:]

    settled = errors <= floor
    usable = ~settled & (ks >= 1.0)
    if settled.any() and settled.sum() >= usable.sum():
        first = int(ks[np.argmax(settled)])
        logger.info("Merit settled at phi* from k=%d on; finite termination", first)
        return RateReport(
            RateRegime.FINITE, None, phi_star=phi_star, phi_star_estimated=estimated, rows_used=int(settled.sum())
        )
    if usable.sum() < min_rows:
        raise RateFitError(f"only {int(usable.sum())} usable rows after skipping {skip}; need {min_rows}")

    k_fit, log_e = ks[usable], np.log(errors[usable])
    linear = stats.linregress(k_fit, log_e)
    power = stats.linregress(np.log(k_fit), log_e)
    r2_linear, r2_power = linear.rvalue**2, power.rvalue**2
    logger.debug("Rate fits: linear R2=%.6f power R2=%.6f", r2_linear, r2_power)

    if r2_linear >= r2_power:
        return RateReport(
            RateRegime.LINEAR,
            float(r2_linear),
            Q=float(np.exp(linear.slope)),
            phi_star=phi_star,
            phi_star_estimated=estimated,
            rows_used=int(usable.sum()),
        )
    exponent = float(power.slope)
    theta = None
    if exponent < 0.0:
        candidate = theta_from_exponent(exponent)
        theta = candidate if 0.5 < candidate < 1.0 else None
    return RateReport(
        RateRegime.SUBLINEAR_POWER,
        float(r2_power),
        exponent=exponent,
        theta=theta,
        phi_star=phi_star,
        phi_star_estimated=estimated,
        rows_used=int(usable.sum()),
    )


def rates_from_rows(rows: Sequence[dict], phi_star: float | None = None) -> RateReport:
    return fit_rates([row["k"] for row in rows], [row["merit"] for row in rows], phi_star)
