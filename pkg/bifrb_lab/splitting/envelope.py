"""
Forward-reflected-backward envelope and the merit function built on it.

E(x, x⁻) is the model at x̄ ∈ T(x, x⁻). The merit adds (c/2γ)·D(x, x⁻) and the
Bregman distance of the certifying reference ξ:

    L(x, x⁻) = E(x, x⁻) + (c/2γ)·D(x, x⁻) + D_ξ(x, x⁻)
"""

from __future__ import annotations

import logging
from collections import OrderedDict
from dataclasses import dataclass
from typing import Any

import numpy as np

from .kernel import GeneralizedReference, Vector
from .planner import PlannedParams, XiRegime
from .problem import ProblemInstance, ProxError, phi
from .solver import (
    OraclePoint,
    bregman_from_points,
    f_beta_bregman,
    frb_from_points,
    h_hat_bregman,
    model_from_points,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class MeritSpec:
    params: PlannedParams
    xi: GeneralizedReference


@dataclass(frozen=True, slots=True)
class DecreaseCertificate:
    """Slacks of the sufficient-decrease and lower-bound inequalities for one step."""

    ok: bool
    slack_SD: float
    slack_Lgeq: float
    slack_fconv: float | None = None
    merit_next: float = float("nan")
    envelope_next: float = float("nan")


def build_merit_spec(p: ProblemInstance, params: PlannedParams) -> MeritSpec:
    if params.xi_regime is XiRegime.CONVEX_REFERENCE:
        xi = GeneralizedReference.combination(
            (1.0, p.f), (-params.beta / params.gamma, p.kernel), name="f_beta"
        )
    else:
        if params.L_fbeta is None:
            raise ValueError("QuadraticReference merit needs L_fbeta.")
        xi = GeneralizedReference.quadratic(params.L_fbeta, name=f"{params.L_fbeta:g}*j")
    return MeritSpec(params=params, xi=xi)


class MeritEvaluator:
    """
    Evaluates T, E and L for one problem with cached oracle points.

    Points and operator outputs are memoized by the bytes of their arguments, so
    the certification of step k computes T(x^{k+1}, x^k) once and the solver
    reuses it as step k+1.
    """

    def __init__(self, p: ProblemInstance, spec: MeritSpec, tie_break: str | None = None, cache_size: int = 256):
        self.problem = p
        self.spec = spec
        self.params = spec.params
        self.tie_break = tie_break
        self.cache_size = cache_size
        self._points: OrderedDict[bytes, OraclePoint] = OrderedDict()
        self._operator: OrderedDict[bytes, Vector] = OrderedDict()
        self.prox_calls = 0

    def _remember(self, cache: OrderedDict, key: bytes, value: Any) -> None:
        cache[key] = value
        if len(cache) > self.cache_size:
            cache.popitem(last=False)

    def point(self, x: Any) -> OraclePoint:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        key = x.tobytes()
        cached = self._points.get(key)
        if cached is None:
            cached = OraclePoint.at(self.problem, x)
            self._remember(self._points, key, cached)
        return cached

    def operator(self, x: OraclePoint, x_minus: OraclePoint) -> Vector:
        key = x.x.tobytes() + x_minus.x.tobytes()
        cached = self._operator.get(key)
        if cached is None:
            cached = frb_from_points(self.problem, self.params, x, x_minus, self.tie_break)
            self.prox_calls += 1
            self._remember(self._operator, key, cached)
        return cached

    def distance(self, a: OraclePoint, b: OraclePoint) -> float:
        return bregman_from_points(a, b)

    def xi_distance(self, a: OraclePoint, b: OraclePoint) -> float:
        if self.params.xi_regime is XiRegime.CONVEX_REFERENCE:
            return f_beta_bregman(self.params, a, b)
        gap = a.x - b.x
        return 0.5 * float(self.params.L_fbeta) * float(np.dot(gap, gap))

    def model(self, w: OraclePoint, x: OraclePoint, x_minus: OraclePoint) -> float:
        value = model_from_points(self.problem, self.params, w, x, x_minus)
        if not value.is_finite:
            raise ProxError(f"Model is {value} at prox output {w.x!r}.")
        return value.value

    def envelope(self, x: OraclePoint, x_minus: OraclePoint) -> float:
        x_bar = self.point(self.operator(x, x_minus))
        return self.model(x_bar, x, x_minus)

    def tail(self, x: OraclePoint, x_minus: OraclePoint) -> float:
        """(c/2γ)·D(x, x⁻) + D_ξ(x, x⁻)."""
        weight = self.params.c / (2.0 * self.params.gamma)
        return weight * self.distance(x, x_minus) + self.xi_distance(x, x_minus)

    def merit(self, x: OraclePoint, x_minus: OraclePoint) -> float:
        return self.envelope(x, x_minus) + self.tail(x, x_minus)

    def certify(
        self,
        x_next: OraclePoint,
        x: OraclePoint,
        x_minus: OraclePoint,
        merit_curr: float | None = None,
        tolerance: float = 0.0,
    ) -> DecreaseCertificate:
        """Check the decrease inequalities for the step x̄ = x_next ∈ T(x, x⁻)."""
        params = self.params
        weight = params.c / (2.0 * params.gamma)
        if merit_curr is None:
            merit_curr = self.merit(x, x_minus)
        envelope_next = self.envelope(x_next, x)
        merit_next = envelope_next + self.tail(x_next, x)
        step = self.distance(x_next, x)
        previous = self.distance(x, x_minus)
        slack_sd = merit_curr - weight * step - weight * previous - merit_next
        slack_lgeq = merit_curr - 2.0 * weight * step - weight * previous - float(phi(self.problem, x_next.x))

        slack_fconv = None
        if params.xi_regime is XiRegime.CONVEX_REFERENCE:
            envelope_curr = self.envelope(x, x_minus)
            defect = h_hat_bregman(params, x_next, x) - 2.0 * f_beta_bregman(params, x_next, x)
            slack_fconv = (
                envelope_curr
                + f_beta_bregman(params, x, x_minus)
                - defect
                - envelope_next
                - f_beta_bregman(params, x_next, x)
            )

        ok = params.c > 0.0 and slack_sd >= -tolerance and slack_lgeq >= -tolerance
        if not ok:
            logger.debug("Decrease check failed: slack_SD=%.3e slack_Lgeq=%.3e c=%g", slack_sd, slack_lgeq, params.c)
        return DecreaseCertificate(
            ok=ok,
            slack_SD=slack_sd,
            slack_Lgeq=slack_lgeq,
            slack_fconv=slack_fconv,
            merit_next=merit_next,
            envelope_next=envelope_next,
        )


def envelope_value(p: ProblemInstance, params: PlannedParams, x: Any, x_minus: Any, tie_break: str | None = None) -> float:
    evaluator = MeritEvaluator(p, build_merit_spec(p, params), tie_break)
    return evaluator.envelope(evaluator.point(x), evaluator.point(x_minus))


def merit_value(p: ProblemInstance, spec: MeritSpec, x: Any, x_minus: Any, tie_break: str | None = None) -> float:
    evaluator = MeritEvaluator(p, spec, tie_break)
    return evaluator.merit(evaluator.point(x), evaluator.point(x_minus))


def product_space_F(p: ProblemInstance, spec: MeritSpec, w: Any, x: Any, x_minus: Any) -> float:
    """
    F(w, x, x⁻) = M(w; x, x⁻) + (c/2γ)·D(x, x⁻) + D_ξ(x, x⁻).

    Minimizing over w gives L(x, x⁻), so the merit is a parametric minimum of F.
    Returns +inf when w is outside dom φ or C.
    """
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not p.kernel.domain_probe(w):
        return float("inf")
    evaluator = MeritEvaluator(p, spec)
    w_pt, x_pt, xm_pt = evaluator.point(w), evaluator.point(x), evaluator.point(x_minus)
    value = model_from_points(p, spec.params, w_pt, x_pt, xm_pt)
    if not value.is_finite:
        return float("inf")
    return value.value + evaluator.tail(x_pt, xm_pt)


def merit_along_trajectory(p: ProblemInstance, spec: MeritSpec, x_next: Any, x: Any, x_minus: Any) -> float:
    """L(x, x⁻) from a known x_next ∈ T(x, x⁻), without another prox evaluation."""
    return product_space_F(p, spec, x_next, x, x_minus)


def certify_decrease(
    p: ProblemInstance,
    spec: MeritSpec,
    x_next: Any,
    x: Any,
    x_minus: Any,
    x_prev_merit: float | None = None,
    tolerance: float = 0.0,
    tie_break: str | None = None,
) -> DecreaseCertificate:
    """Signed slacks for x_next ∈ T(x, x⁻); reports and never raises. A failed prox gives ``ok=False``."""
    evaluator = MeritEvaluator(p, spec, tie_break)
    try:
        return evaluator.certify(
            evaluator.point(x_next), evaluator.point(x), evaluator.point(x_minus), x_prev_merit, tolerance
        )
    except ProxError as exc:
        logger.warning("Decrease check on %s could not evaluate the envelope: %s", p.name, exc)
        return DecreaseCertificate(ok=False, slack_SD=float("nan"), slack_Lgeq=float("nan"))

