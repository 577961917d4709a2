from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np

from .conf import get_setting
from .extended import ExtendedReal
from .kernel import DomainExitError, Vector
from .planner import PlannedParams
from .problem import OracleCheckError, ProblemInstance, ProxError, phi

logger = logging.getLogger(__name__)


class CertificationError(Exception):
    """Raised when a certified run violates a merit decrease inequality beyond the slack."""

    def __init__(self, message: str, result: "RunResult | None" = None, certificate: Any = None):
        super().__init__(message)
        self.result = result
        self.certificate = certificate


TIE_BREAKS = ("farthest", "nearest", "first")


@dataclass(slots=True)
class OraclePoint:
    """A point of C with f, h and their gradients evaluated once."""

    x: Vector
    f: float
    h: float
    grad_f: Vector
    grad_h: Vector

    @classmethod
    def at(cls, p: ProblemInstance, x: Any) -> "OraclePoint":
        x = np.atleast_1d(np.asarray(x, dtype=float))
        p.kernel.require_interior(x)
        return cls(
            x=x,
            f=float(p.f.value(x)),
            h=float(p.kernel.value(x)),
            grad_f=np.asarray(p.f.gradient(x), dtype=float),
            grad_h=np.asarray(p.kernel.gradient(x), dtype=float),
        )


def grad_h_hat(params: PlannedParams, pt: OraclePoint) -> Vector:
    """∇ĥ with ĥ = (1/γ)h − f."""
    return pt.grad_h / params.gamma - pt.grad_f


def grad_f_beta(params: PlannedParams, pt: OraclePoint) -> Vector:
    """∇f̂_β with f̂_β = f − (β/γ)h."""
    return pt.grad_f - (params.beta / params.gamma) * pt.grad_h


def bregman_from_points(a: OraclePoint, b: OraclePoint) -> float:
    return max(a.h - b.h - float(np.dot(b.grad_h, a.x - b.x)), 0.0)


def f_bregman_from_points(a: OraclePoint, b: OraclePoint) -> float:
    """D_f(a, b); f need not be convex."""
    return a.f - b.f - float(np.dot(b.grad_f, a.x - b.x))


def h_hat_bregman(params: PlannedParams, a: OraclePoint, b: OraclePoint) -> float:
    return bregman_from_points(a, b) / params.gamma - f_bregman_from_points(a, b)


def f_beta_bregman(params: PlannedParams, a: OraclePoint, b: OraclePoint) -> float:
    return f_bregman_from_points(a, b) - (params.beta / params.gamma) * bregman_from_points(a, b)


def model_from_points(
    p: ProblemInstance, params: PlannedParams, w: OraclePoint, x: OraclePoint, x_minus: OraclePoint
) -> ExtendedReal:
    """φ(w) + D_ĥ(w,x) + ⟨w − x, ∇f̂_β(x) − ∇f̂_β(x⁻)⟩."""
    inertial = float(np.dot(w.x - x.x, grad_f_beta(params, x) - grad_f_beta(params, x_minus)))
    return phi(p, w.x) + (h_hat_bregman(params, w, x) + inertial)


def model_bregman_form_from_points(
    p: ProblemInstance, params: PlannedParams, w: OraclePoint, x: OraclePoint, x_minus: OraclePoint
) -> ExtendedReal:
    """φ(w) + D_{ĥ−f̂_β}(w,x) + D_{f̂_β}(w,x⁻) − D_{f̂_β}(x,x⁻)."""
    correction = (
        h_hat_bregman(params, w, x)
        - f_beta_bregman(params, w, x)
        + f_beta_bregman(params, w, x_minus)
        - f_beta_bregman(params, x, x_minus)
    )
    return phi(p, w.x) + correction


def _tilt(params: PlannedParams, x: OraclePoint, x_minus: OraclePoint) -> Vector:
    gamma, beta = params.gamma, params.beta
    # dual point of the mirror step: ∇h(y) = ∇h(x) − γ(∇f(x) − ∇f(x⁻))
    dual_y = x.grad_h - gamma * (x.grad_f - x_minus.grad_f)
    return dual_y - gamma * x.grad_f + beta * (x.grad_h - x_minus.grad_h)


def select_candidate(candidates: list[Vector], x: Vector, rule: str) -> Vector:
    """Deterministic pick from a set-valued prox: farthest from x, nearest to x, or first."""
    if rule not in TIE_BREAKS:
        raise ValueError(f"Unknown tie-break rule '{rule}'; expected one of {', '.join(TIE_BREAKS)}.")
    if rule == "first" or len(candidates) == 1:
        return candidates[0]
    distances = [float(np.linalg.norm(c - x)) for c in candidates]
    index = int(np.argmax(distances)) if rule == "farthest" else int(np.argmin(distances))
    return candidates[index]


def frb_from_points(
    p: ProblemInstance, params: PlannedParams, x: OraclePoint, x_minus: OraclePoint, tie_break: str | None = None
) -> Vector:
    tilt = _tilt(params, x, x_minus)
    try:
        candidates = p.g.tilted_bregman_prox(p.kernel, params.gamma, tilt)
    except DomainExitError:
        raise
    except Exception as exc:
        raise ProxError(f"Tilted prox of {p.g.name} failed at tilt={tilt!r}: {exc}") from exc
    if not candidates:
        raise ProxError(f"Tilted prox of {p.g.name} returned no candidate at tilt={tilt!r}.")
    for candidate in candidates:
        p.kernel.require_interior(candidate, "prox output")
    x_next = np.atleast_1d(np.asarray(select_candidate(candidates, x.x, tie_break or get_setting("BIFRB_TIE_BREAK")), dtype=float))

    if get_setting("BIFRB_DEBUG_CHECKS"):
        _cross_check_minimizer(p, params, tilt, x_next)
    return x_next


def _cross_check_minimizer(p: ProblemInstance, params: PlannedParams, tilt: Vector, x_next: Vector, probes: int = 64) -> None:
    rng = np.random.default_rng(0)
    best = p.g.subproblem_value(p.kernel, params.gamma, tilt, x_next)
    scale = 1.0 + float(np.linalg.norm(x_next))
    for z in x_next + scale * rng.normal(size=(probes, x_next.size)):
        if not p.kernel.domain_probe(z):
            continue
        value = p.g.subproblem_value(p.kernel, params.gamma, tilt, z)
        if value < best - 1e-9 * (1.0 + abs(best)):
            raise ProxError(f"Probe {z!r} beats the prox output {x_next!r} ({value!r} < {best!r}).")
    logger.debug("Prox output %r passed %d random probes", x_next, probes)


def _spot_check(p: ProblemInstance, pt: OraclePoint) -> None:
    if not np.allclose(pt.grad_f, p.f.gradient(pt.x)) or not np.allclose(pt.grad_h, p.kernel.gradient(pt.x)):
        raise OracleCheckError(f"Cached gradients are stale at {pt.x!r}.")


def residual_from_points(params: PlannedParams, x_next: OraclePoint, x: OraclePoint, x_minus: OraclePoint) -> Vector:
    """∇ĥ(x) − ∇ĥ(x̄) − ∇f̂_β(x) + ∇f̂_β(x⁻), an element of ∂̂φ(x̄)."""
    return (
        grad_h_hat(params, x)
        - grad_h_hat(params, x_next)
        - grad_f_beta(params, x)
        + grad_f_beta(params, x_minus)
    )


def model_value(p: ProblemInstance, params: PlannedParams, w: Any, x: Any, x_minus: Any) -> ExtendedReal:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not p.kernel.domain_probe(w):
        return ExtendedReal.infinity()
    return model_from_points(p, params, OraclePoint.at(p, w), OraclePoint.at(p, x), OraclePoint.at(p, x_minus))


def model_value_bregman_form(p: ProblemInstance, params: PlannedParams, w: Any, x: Any, x_minus: Any) -> ExtendedReal:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if not p.kernel.domain_probe(w):
        return ExtendedReal.infinity()
    return model_bregman_form_from_points(
        p, params, OraclePoint.at(p, w), OraclePoint.at(p, x), OraclePoint.at(p, x_minus)
    )


def frb_operator(
    p: ProblemInstance, params: PlannedParams, x: Any, x_minus: Any, tie_break: str | None = None
) -> Vector:
    """One element of T(x, x⁻)."""
    return frb_from_points(p, params, OraclePoint.at(p, x), OraclePoint.at(p, x_minus), tie_break)


def residual(p: ProblemInstance, params: PlannedParams, x_next: Any, x: Any, x_minus: Any) -> Vector:
    return residual_from_points(params, OraclePoint.at(p, x_next), OraclePoint.at(p, x), OraclePoint.at(p, x_minus))


@dataclass(frozen=True, slots=True)
class StopCriteria:
    eps_residual: float = 1e-8
    max_iters: int = 10_000


class RunStatus(str, Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max_iters"
    CERTIFICATION_FAILED = "certification_failed"

    @property
    def exit_code(self) -> int:
        return {"converged": 0, "max_iters": 2, "certification_failed": 3}[self.value]


@dataclass(slots=True)
class SolverState:
    k: int
    prev: OraclePoint
    curr: OraclePoint
    params: PlannedParams

    @property
    def x_prev(self) -> Vector:
        return self.prev.x

    @property
    def x_curr(self) -> Vector:
        return self.curr.x

    def advance(self, nxt: OraclePoint) -> None:
        self.prev, self.curr = self.curr, nxt
        self.k += 1


@dataclass(slots=True)
class IterationRecord:
    """One trace row: row k describes the step from x^k to x^{k+1}."""

    k: int
    x: Vector
    phi: ExtendedReal
    merit: float
    D_step: float
    residual_norm: float
    envelope: float
    tau: float | None = None
    wall_ns: int = 0
    x_bar: Vector | None = None
    direction: Vector | None = None
    slack_sd: float | None = None
    slack_lgeq: float | None = None
    slack_ls: float | None = None
    backtracks: int = 0

    def as_row(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "phi": float(self.phi),
            "merit": self.merit,
            "envelope": self.envelope,
            "D_step": self.D_step,
            "residual_norm": self.residual_norm,
            "tau": self.tau,
            "wall_ns": self.wall_ns,
        }


@dataclass(slots=True)
class RunResult:
    trace: list[IterationRecord]
    status: RunStatus
    x_final: Vector
    params: PlannedParams
    message: str = ""
    failed_certificate: Any = None
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        return self.status.exit_code

    @property
    def iterations(self) -> int:
        return len(self.trace)


def run(
    p: ProblemInstance,
    params: PlannedParams,
    x_minus1: Any,
    x0: Any,
    stop: StopCriteria | None = None,
    tie_break: str | None = None,
) -> RunResult:
    """
    Iterate x^{k+1} ∈ T(x^k, x^{k−1}) until ‖v^{k+1}‖ and D(x^{k+1}, x^k) are both
    below ``stop.eps_residual`` or ``stop.max_iters`` steps were taken.

    Certified params abort with CertificationError as soon as a merit decrease
    inequality fails beyond BIFRB_CERT_SLACK; manual params never abort.
    """
    from .envelope import MeritEvaluator, build_merit_spec

    stop = stop or StopCriteria()
    evaluator = MeritEvaluator(p, build_merit_spec(p, params), tie_break=tie_break)
    slack = get_setting("BIFRB_CERT_SLACK")
    debug = get_setting("BIFRB_DEBUG_CHECKS")
    state = SolverState(0, evaluator.point(x_minus1), evaluator.point(x0), params)
    merit_curr = evaluator.merit(state.curr, state.prev)
    trace: list[IterationRecord] = []
    status = RunStatus.MAX_ITERS

    logger.info(
        "Running %s: gamma=%.6g beta=%.6g c=%.6g certified=%s", p.name, params.gamma, params.beta, params.c, params.certified
    )
    while state.k < stop.max_iters:
        started = time.perf_counter_ns()
        nxt = evaluator.point(evaluator.operator(state.curr, state.prev))
        if debug:
            _spot_check(p, nxt)
        certificate = evaluator.certify(nxt, state.curr, state.prev, merit_curr, tolerance=slack)
        v = residual_from_points(params, nxt, state.curr, state.prev)
        record = IterationRecord(
            k=state.k,
            x=nxt.x,
            phi=phi(p, nxt.x),
            merit=certificate.merit_next,
            D_step=evaluator.distance(nxt, state.curr),
            residual_norm=float(np.linalg.norm(v)),
            envelope=certificate.envelope_next,
            wall_ns=time.perf_counter_ns() - started,
            slack_sd=certificate.slack_SD,
            slack_lgeq=certificate.slack_Lgeq,
        )
        trace.append(record)
        logger.debug("k=%d phi=%s merit=%.17g residual=%.3e", record.k, record.phi, record.merit, record.residual_norm)

        if params.certified and not certificate.ok:
            result = RunResult(trace, RunStatus.CERTIFICATION_FAILED, nxt.x, params, failed_certificate=certificate)
            result.message = (
                f"merit decrease failed at k={state.k}: slack_SD={certificate.slack_SD:.3e}, "
                f"slack_Lgeq={certificate.slack_Lgeq:.3e}"
            )
            logger.error("%s: %s", p.name, result.message)
            raise CertificationError(result.message, result=result, certificate=certificate)

        merit_curr = certificate.merit_next
        state.advance(nxt)
        if record.residual_norm <= stop.eps_residual and record.D_step <= stop.eps_residual:
            status = RunStatus.CONVERGED
            break

    result = RunResult(trace, status, state.x_curr, params)
    logger.info("%s finished: %s after %d iterations", p.name, status.value, len(trace))
    return result
