"""
Invariant suite behind the ``certify`` command.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..envelope import MeritEvaluator, build_merit_spec
from ..problem import ZeroFunction, phi
from ..solver import model_bregman_form_from_points, model_from_points, run
from .experiments import RunConfig, build_problem, plan_for, starting_points

logger = logging.getLogger(__name__)

PASS = "pass"
FAIL = "fail"
EXPECTED_FAIL = "expected-fail"
SKIPPED = "skipped"


@dataclass(slots=True)
class InvariantResult:
    name: str
    status: str
    detail: str = ""


@dataclass(slots=True)
class CertifyReport:
    instance: str
    certified: bool
    results: list[InvariantResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(result.status != FAIL for result in self.results)

    def to_dict(self) -> dict:
        return {
            "instance": self.instance,
            "certified": self.certified,
            "ok": self.ok,
            "results": [asdict(result) for result in self.results],
        }


def _status(holds: bool, certified: bool = True) -> str:
    if holds:
        return PASS
    return FAIL if certified else EXPECTED_FAIL


def certify_instance(config: RunConfig, samples: int = 200) -> CertifyReport:
    problem = build_problem(config)
    params = plan_for(problem, config.plan)
    evaluator = MeritEvaluator(problem, build_merit_spec(problem, params), tie_break=config.tie_break)
    rng = np.random.default_rng(config.seed)
    report = CertifyReport(instance=problem.name, certified=params.certified)

    feasible = problem.sample_feasible(rng, samples)
    anchors = problem.sample_points(rng, samples)
    probes = problem.sample_feasible(rng, samples)

    worst_tangency = worst_forms = worst_envelope = 0.0
    for x, x_minus, w in zip(feasible, anchors, probes):
        x_pt, xm_pt, w_pt = evaluator.point(x), evaluator.point(x_minus), evaluator.point(w)
        phi_x = float(phi(problem, x))
        tangent = evaluator.model(x_pt, x_pt, xm_pt)
        worst_tangency = max(worst_tangency, abs(tangent - phi_x) / (1.0 + abs(phi_x)))
        inner = float(model_from_points(problem, params, w_pt, x_pt, xm_pt))
        bregman = float(model_bregman_form_from_points(problem, params, w_pt, x_pt, xm_pt))
        worst_forms = max(worst_forms, abs(inner - bregman) / (1.0 + abs(inner)))
        worst_envelope = max(worst_envelope, evaluator.envelope(x_pt, xm_pt) - phi_x)

    report.results.append(InvariantResult("model_tangency", _status(worst_tangency <= 1e-10), f"max rel. gap {worst_tangency:.3e}"))
    report.results.append(InvariantResult("model_forms_agree", _status(worst_forms <= 1e-9), f"max rel. gap {worst_forms:.3e}"))
    report.results.append(InvariantResult("envelope_below_phi", _status(worst_envelope <= 1e-12), f"max excess {worst_envelope:.3e}"))

    # run uncertified so every step is assessed instead of aborting on the first failure
    x_minus1, x0 = starting_points(problem, config)
    result = run(problem, replace(params, certified=False), x_minus1, x0, config.stop, config.tie_break)
    steps = len(result.trace)
    sd_failures = sum(1 for record in result.trace if record.slack_sd < -1e-9)
    lgeq_failures = sum(1 for record in result.trace if record.slack_lgeq < -1e-9)
    decrease_holds = params.c > 0.0 and sd_failures == 0
    report.results.append(
        InvariantResult(
            "merit_decrease",
            _status(decrease_holds, params.certified),
            f"{sd_failures}/{steps} steps below slack, c={params.c:g}",
        )
    )
    report.results.append(
        InvariantResult(
            "phi_below_merit",
            _status(params.c > 0.0 and lgeq_failures == 0, params.certified),
            f"{lgeq_failures}/{steps} steps below slack",
        )
    )

    steps_d = np.array([record.D_step for record in result.trace])
    tails = np.cumsum(steps_d[::-1])[::-1] if steps_d.size else np.array([0.0])
    summable = bool(np.any(tails < 1e-6)) or steps_d.size == 0
    report.results.append(
        InvariantResult(
            "step_summability",
            _status(summable, params.certified),
            f"smallest tail sum {float(tails.min()):.3e} over {steps} steps",
        )
    )

    if isinstance(problem.g, ZeroFunction) and problem.kernel.name == "euclidean" and params.beta == 0.0:
        x_prev, x_curr = np.asarray(x_minus1, dtype=float), np.asarray(x0, dtype=float)
        worst = 0.0
        for record in result.trace:
            expected = x_curr - params.gamma * (2.0 * problem.f.gradient(x_curr) - problem.f.gradient(x_prev))
            worst = max(worst, float(np.max(np.abs(record.x - expected))) / (1.0 + float(np.max(np.abs(expected)))))
            x_prev, x_curr = x_curr, record.x
        report.results.append(InvariantResult("reflected_gradient_equivalence", _status(worst <= 1e-12), f"max rel. gap {worst:.3e}"))
    else:
        report.results.append(InvariantResult("reflected_gradient_equivalence", SKIPPED, "needs g = 0, Euclidean kernel, beta = 0"))

    logger.info("Certify %s: %s", problem.name, "ok" if report.ok else "failed")
    return report
