"""
Merit-based linesearch around the forward-reflected-backward step.

Each step computes x̄ = T(x^k, y^{k−1}), asks a direction provider for d^k and
backtracks τ over 1, ½, ¼, ... until

    L(x^{k+1}, y^k) ≤ L(x^k, y^{k−1}) − δ·(c/2γ)·(D(x̄^k, x^k) + D(x^k, y^{k−1}))

with x^{k+1} = (1−τ)x̄^k + τ(x^k + d^k) and y^k = x^k + τd^k. τ = 0 always passes
and is used as the fallback. Trials are accepted up to BIFRB_CERT_SLACK of rounding.
"""

from __future__ import annotations

import logging
import time
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Any, Iterator, Sequence

import numpy as np

from .conf import get_setting
from .envelope import MeritEvaluator, MeritSpec
from .kernel import DomainExitError, Vector
from .problem import ProblemInstance, phi
from .solver import (
    CertificationError,
    IterationRecord,
    RunResult,
    RunStatus,
    StopCriteria,
    residual_from_points,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class LinesearchConfig:
    delta: float = 0.5
    tau_min: float = 2.0**-40
    max_backtracks: int = 40

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta!r}.")
        if self.tau_min <= 0.0 or self.max_backtracks < 0:
            raise ValueError("tau_min must be positive and max_backtracks nonnegative.")

    @classmethod
    def from_settings(cls) -> "LinesearchConfig":
        return cls(delta=get_setting("BIFRB_LS_DELTA"), max_backtracks=get_setting("BIFRB_MAX_BACKTRACKS"))

    def taus(self) -> Iterator[float]:
        tau = 1.0
        for _ in range(self.max_backtracks + 1):
            if tau < self.tau_min:
                return
            yield tau
            tau *= 0.5


class DirectionProvider(ABC):
    """Proposes d^k from the history of (x^i, r(x^i)) with r(x) = x − T(x, x)."""

    memory: int = 0

    @abstractmethod
    def propose(self, history: Sequence[tuple[Vector, Vector]]) -> Vector:
        """Direction at the last history entry; must be finite."""


class BroydenDirectionProvider(DirectionProvider):
    """
    Good-Broyden inverse Jacobian of the fixed-point residual, rebuilt from the
    last ``memory`` secant pairs starting at the identity. d = −H·r.
    """

    def __init__(self, memory: int = 5):
        if memory < 0:
            raise ValueError("memory must be nonnegative.")
        self.memory = memory

    def propose(self, history):
        r_last = history[-1][1]
        window = list(history[-(self.memory + 1):]) if self.memory else [history[-1]]
        us: list[Vector] = []
        ws: list[Vector] = []

        def apply(v: Vector) -> Vector:
            out = np.array(v, dtype=float)
            for u, w in zip(us, ws):
                out += u * float(np.dot(w, v))
            return out

        def apply_transpose(v: Vector) -> Vector:
            out = np.array(v, dtype=float)
            for u, w in zip(us, ws):
                out += w * float(np.dot(u, v))
            return out

        for (x0, r0), (x1, r1) in zip(window, window[1:]):
            s, y = x1 - x0, r1 - r0
            hy = apply(y)
            denom = float(np.dot(s, hy))
            if not np.isfinite(denom) or abs(denom) <= 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(hy)):
                logger.debug("Skipping singular Broyden update (sᵀHy=%r)", denom)
                continue
            ws.append(apply_transpose(s))
            us.append((s - hy) / denom)

        direction = -apply(r_last)
        if not np.all(np.isfinite(direction)):
            logger.warning("Broyden direction is not finite; using -r instead")
            return -np.asarray(r_last, dtype=float)
        return direction


class ZeroDirectionProvider(DirectionProvider):
    def propose(self, history):
        return np.zeros_like(np.asarray(history[-1][0], dtype=float))


def broyden_direction_provider(memory: int = 5) -> DirectionProvider:
    return BroydenDirectionProvider(memory)


def zero_direction_provider() -> DirectionProvider:
    return ZeroDirectionProvider()


def fixed_point_residual(evaluator: MeritEvaluator, x: Any) -> Vector:
    """r(x) = x − T(x, x)."""
    pt = evaluator.point(x)
    return pt.x - evaluator.operator(pt, pt)


@dataclass(slots=True)
class LinesearchState:
    x: Vector
    y_prev: Vector
    history: list[tuple[Vector, Vector]] = field(default_factory=list)
    merit: float | None = None


@dataclass(slots=True)
class LinesearchStep:
    x_next: Vector
    y: Vector
    tau: float | None
    x_bar: Vector
    direction: Vector
    merit_curr: float
    merit_next: float
    slack: float
    D_bar: float
    backtracks: int = 0
    stationary: bool = False
    fallback: bool = False


def ls_step(
    p: ProblemInstance,
    spec: MeritSpec,
    cfg: LinesearchConfig,
    provider: DirectionProvider,
    state: LinesearchState,
    evaluator: MeritEvaluator | None = None,
) -> LinesearchStep:
    """One linesearch step from (x^k, y^{k−1}); appends (x^k, r(x^k)) to ``state.history``."""
    ev = evaluator or MeritEvaluator(p, spec)
    params = spec.params
    x_pt, y_pt = ev.point(state.x), ev.point(state.y_prev)
    x_bar = ev.operator(x_pt, y_pt)
    bar_pt = ev.point(x_bar)
    merit_curr = state.merit if state.merit is not None else ev.merit(x_pt, y_pt)
    d_bar = ev.distance(bar_pt, x_pt)
    d_prev = ev.distance(x_pt, y_pt)
    decrease = cfg.delta * params.c / (2.0 * params.gamma) * (d_bar + d_prev)
    tolerance = get_setting("BIFRB_CERT_SLACK")

    if d_bar == 0.0 and d_prev == 0.0:
        return LinesearchStep(
            x_next=x_bar,
            y=x_pt.x,
            tau=None,
            x_bar=x_bar,
            direction=np.zeros_like(x_bar),
            merit_curr=merit_curr,
            merit_next=merit_curr,
            slack=0.0,
            D_bar=0.0,
            stationary=True,
        )

    state.history.append((x_pt.x, fixed_point_residual(ev, x_pt.x)))
    del state.history[: -(provider.memory + 2)]
    direction = np.asarray(provider.propose(state.history), dtype=float)
    if not np.all(np.isfinite(direction)):
        logger.warning("Direction provider returned a non-finite direction; using d = 0")
        direction = np.zeros_like(x_bar)
    x_plus_d = x_pt.x + direction

    for backtracks, tau in enumerate(cfg.taus()):
        if tau == 1.0:
            y = x_plus_d
            x_next = x_plus_d
        else:
            y = x_pt.x + tau * direction
            x_next = (1.0 - tau) * x_bar + tau * x_plus_d
        try:
            merit_next = ev.merit(ev.point(x_next), ev.point(y))
        except DomainExitError:
            logger.debug("Trial tau=%g left the kernel domain", tau)
            continue
        slack = merit_curr - decrease - merit_next
        if slack >= -tolerance:
            return LinesearchStep(
                x_next=x_next,
                y=y,
                tau=tau,
                x_bar=x_bar,
                direction=direction,
                merit_curr=merit_curr,
                merit_next=merit_next,
                slack=slack,
                D_bar=d_bar,
                backtracks=backtracks,
            )

    logger.warning("Linesearch exhausted %d backtracks; taking the plain step (tau=0)", cfg.max_backtracks)
    merit_next = ev.merit(bar_pt, x_pt)
    return LinesearchStep(
        x_next=x_bar,
        y=x_pt.x,
        tau=0.0,
        x_bar=x_bar,
        direction=direction,
        merit_curr=merit_curr,
        merit_next=merit_next,
        slack=merit_curr - decrease - merit_next,
        D_bar=d_bar,
        backtracks=cfg.max_backtracks,
        fallback=True,
    )


def run_ls(
    p: ProblemInstance,
    spec: MeritSpec,
    cfg: LinesearchConfig,
    provider: DirectionProvider,
    x_minus1: Any,
    x0: Any,
    stop: StopCriteria | None = None,
    tie_break: str | None = None,
) -> RunResult:
    """
    Run linesearch steps until the residual at x̄^k and D(x̄^k, x^k) are below
    ``stop.eps_residual``. On convergence the returned point is x̄^k.

    A stationary step (x̄^k = x^k = y^{k−1}) ends the run without a new row; only a stationary
    start is recorded, with ``tau=None``.
    """
    stop = stop or StopCriteria()
    params = spec.params
    ev = MeritEvaluator(p, spec, tie_break=tie_break)
    tolerance = get_setting("BIFRB_CERT_SLACK")
    state = LinesearchState(
        x=np.atleast_1d(np.asarray(x0, dtype=float)), y_prev=np.atleast_1d(np.asarray(x_minus1, dtype=float))
    )
    trace: list[IterationRecord] = []
    status = RunStatus.MAX_ITERS
    x_final = state.x

    logger.info("Linesearch on %s: gamma=%.6g beta=%.6g delta=%g", p.name, params.gamma, params.beta, cfg.delta)
    for k in range(stop.max_iters):
        started = time.perf_counter_ns()
        x_pt, y_pt = ev.point(state.x), ev.point(state.y_prev)
        step = ls_step(p, spec, cfg, provider, state, ev)
        if step.stationary and trace:
            # no trial was made; the previous row already holds x^k
            status = RunStatus.CONVERGED
            x_final = step.x_bar
            break
        bar_pt = ev.point(step.x_bar)
        v = residual_from_points(params, bar_pt, x_pt, y_pt)
        next_pt = ev.point(step.x_next)
        record = IterationRecord(
            k=k,
            x=step.x_next,
            phi=phi(p, step.x_next),
            merit=step.merit_next,
            D_step=step.D_bar,
            residual_norm=float(np.linalg.norm(v)),
            envelope=ev.envelope(next_pt, ev.point(step.y)),
            tau=step.tau,
            wall_ns=time.perf_counter_ns() - started,
            x_bar=step.x_bar,
            direction=step.direction,
            slack_ls=step.slack,
            backtracks=step.backtracks,
        )
        trace.append(record)

        if params.certified and step.slack < -tolerance:
            result = RunResult(trace, RunStatus.CERTIFICATION_FAILED, step.x_next, params)
            result.message = f"linesearch decrease failed at k={k}: slack={step.slack:.3e}"
            logger.error("%s: %s", p.name, result.message)
            raise CertificationError(result.message, result=result)

        if step.stationary or (record.residual_norm <= stop.eps_residual and step.D_bar <= stop.eps_residual):
            status = RunStatus.CONVERGED
            x_final = step.x_bar
            break
        x_final = step.x_next
        state = LinesearchState(x=step.x_next, y_prev=step.y, history=state.history, merit=step.merit_next)

    logger.info("%s linesearch finished: %s after %d iterations", p.name, status.value, len(trace))
    return RunResult(trace, status, x_final, params, extras={"prox_calls": ev.prox_calls})
