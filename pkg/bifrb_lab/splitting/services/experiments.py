"""
Run configuration, execution, manifests and replay.

A run is fully described by its manifest: instance and parameters, the planned
(γ, β, c), starting points, stop criteria and linesearch settings. Replaying a
manifest reproduces the trace bit for bit apart from wall-clock timings.
"""
from __future__ import annotations

import json
import logging
import uuid
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np

from .. import __version__
from ..conf import get_setting
from ..envelope import build_merit_spec
from ..linesearch import LinesearchConfig, broyden_direction_provider, run_ls, zero_direction_provider
from ..planner import (
    CorollaryTag,
    PlannedParams,
    estimate_L_fbeta,
    normalize_moduli,
    plan_auto,
    plan_corollary,
    plan_manual,
    plan_thmSD_A,
    plan_thmSD_B,
)
from ..problem import ProblemInstance, build_instance
from ..solver import TIE_BREAKS, CertificationError, RunResult, StopCriteria, run
from .trace_store import manifest_path_for, read_manifest, write_manifest, write_trace_csv

logger = logging.getLogger(__name__)

PLAN_MODES = ("auto", "thmSD-A", "thmSD-B", "manual", "corollary")
PROVIDERS = ("broyden", "zero")


class ConfigError(Exception):
    """Raised when a run configuration cannot be parsed or has an invalid field."""


@dataclass(slots=True)
class PlanSection:
    mode: str = "auto"
    beta: float | None = None
    c: float | None = None
    gamma: float | None = None
    alpha: float | None = None
    case: str | None = None


@dataclass(slots=True)
class LinesearchSection:
    enabled: bool = False
    delta: float = 0.5
    provider: str = "broyden"
    memory: int = 5
    max_backtracks: int = 40


@dataclass(slots=True)
class RunConfig:
    instance: str
    instance_params: dict[str, Any] = field(default_factory=dict)
    kernel: str | None = None
    plan: PlanSection = field(default_factory=PlanSection)
    start: dict[str, list[float]] | None = None
    stop: StopCriteria = field(default_factory=StopCriteria)
    linesearch: LinesearchSection = field(default_factory=LinesearchSection)
    output_dir: str | None = None
    seed: int = 0
    tie_break: str | None = None

    @classmethod
    def from_dict(cls, data: Any) -> "RunConfig":
        if not isinstance(data, dict):
            raise ConfigError("config: expected a JSON object")
        unknown = sorted(set(data) - set(cls.__dataclass_fields__))
        if unknown:
            raise ConfigError(f"config: unknown key(s) {', '.join(unknown)}")
        instance = _string(data, "instance", required=True)
        plan_data = _section(data, "plan")
        stop_data = _section(data, "stop")
        ls_data = _section(data, "linesearch")

        plan = PlanSection(
            mode=_choice(plan_data, "plan.mode", PLAN_MODES, "auto"),
            beta=_number(plan_data, "plan.beta"),
            c=_number(plan_data, "plan.c"),
            gamma=_number(plan_data, "plan.gamma"),
            alpha=_number(plan_data, "plan.alpha"),
            case=_choice(plan_data, "plan.case", tuple(tag.value for tag in CorollaryTag), None),
        )
        stop = StopCriteria(
            eps_residual=_number(stop_data, "stop.eps_residual", 1e-8),
            max_iters=_integer(stop_data, "stop.max_iters", 10_000),
        )
        linesearch = LinesearchSection(
            enabled=_boolean(ls_data, "linesearch.enabled", False),
            delta=_number(ls_data, "linesearch.delta", get_setting("BIFRB_LS_DELTA")),
            provider=_choice(ls_data, "linesearch.provider", PROVIDERS, "broyden"),
            memory=_integer(ls_data, "linesearch.memory", 5),
            max_backtracks=_integer(ls_data, "linesearch.max_backtracks", get_setting("BIFRB_MAX_BACKTRACKS")),
        )
        start = data.get("start")
        if start is not None:
            if not isinstance(start, dict) or set(start) != {"x_minus1", "x0"}:
                raise ConfigError("start: expected an object with keys x_minus1 and x0")
            for key in ("x_minus1", "x0"):
                if not isinstance(start[key], list) or not all(_is_number(v) for v in start[key]):
                    raise ConfigError(f"start.{key}: expected a list of numbers")
        instance_params = data.get("instance_params", {})
        if not isinstance(instance_params, dict):
            raise ConfigError("instance_params: expected an object")
        return cls(
            instance=instance,
            instance_params=instance_params,
            kernel=_string(data, "kernel"),
            plan=plan,
            start=start,
            stop=stop,
            linesearch=linesearch,
            output_dir=_string(data, "output_dir"),
            seed=_integer(data, "seed", 0),
            tie_break=_choice(data, "tie_break", TIE_BREAKS, None),
        )


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _section(data: dict, key: str) -> dict:
    section = data.get(key, {})
    if not isinstance(section, dict):
        raise ConfigError(f"{key}: expected an object")
    return section


def _number(data: dict, path: str, default: float | None = None) -> float | None:
    value = data.get(path.rsplit(".", 1)[-1], default)
    if value is None:
        return None
    if not _is_number(value):
        raise ConfigError(f"{path}: expected a number")
    return float(value)


def _integer(data: dict, path: str, default: int) -> int:
    value = data.get(path.rsplit(".", 1)[-1], default)
    if not isinstance(value, int) or isinstance(value, bool):
        raise ConfigError(f"{path}: expected an integer")
    return value


def _boolean(data: dict, path: str, default: bool) -> bool:
    value = data.get(path.rsplit(".", 1)[-1], default)
    if not isinstance(value, bool):
        raise ConfigError(f"{path}: expected true or false")
    return value


def _string(data: dict, path: str, required: bool = False) -> str | None:
    value = data.get(path.rsplit(".", 1)[-1])
    if value is None:
        if required:
            raise ConfigError(f"{path}: required")
        return None
    if not isinstance(value, str):
        raise ConfigError(f"{path}: expected a string")
    return value


def _choice(data: dict, path: str, choices: tuple[str, ...], default: str | None) -> str | None:
    value = _string(data, path) or default
    if value is not None and value not in choices:
        raise ConfigError(f"{path}: expected one of {', '.join(choices)}, got '{value}'")
    return value


def load_config(path: Path | str) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from exc
    return RunConfig.from_dict(data)


def apply_overrides(config: RunConfig, **flags: Any) -> RunConfig:
    """Command-line flags win over config keys; None means "not given"."""
    plan_keys = {"beta", "c", "gamma", "alpha", "case"}
    plan_updates = {key: flags.pop(key) for key in list(flags) if key in plan_keys and flags[key] is not None}
    mode = flags.pop("mode", None)
    if flags.pop("manual", False):
        mode = "manual"
    if mode is not None:
        plan_updates["mode"] = mode
    stop_updates = {key: flags.pop(key) for key in ("eps_residual", "max_iters") if flags.get(key) is not None}
    ls_updates = {}
    provider = flags.pop("linesearch", None)
    if provider is not None:
        ls_updates.update(enabled=True, provider=provider)
    top = {key: value for key, value in flags.items() if value is not None}
    unknown = sorted(set(top) - set(RunConfig.__dataclass_fields__))
    if unknown:
        raise ConfigError(f"unknown override(s) {', '.join(unknown)}")
    return replace(
        config,
        plan=replace(config.plan, **plan_updates),
        stop=replace(config.stop, **stop_updates),
        linesearch=replace(config.linesearch, **ls_updates),
        **top,
    )


# ---------------------------------------------------------------------------
# Planning and execution
# ---------------------------------------------------------------------------


def build_problem(config: RunConfig) -> ProblemInstance:
    problem = build_instance(config.instance, **config.instance_params)
    if config.kernel is not None and config.kernel != problem.kernel.name:
        raise ConfigError(f"kernel: instance '{config.instance}' uses kernel '{problem.kernel.name}', not '{config.kernel}'")
    return problem


def plan_for(problem: ProblemInstance, plan: PlanSection) -> PlannedParams:
    mode = plan.mode
    if mode == "manual":
        return plan_manual(problem, plan.beta or 0.0, gamma=plan.gamma, alpha=plan.alpha, c=plan.c)
    if mode == "corollary":
        if plan.case is None:
            raise ConfigError("plan.case: required when plan.mode is corollary")
        kernel = problem.kernel
        moduli = normalize_moduli(problem.f.sigma_f, problem.f.sigma_minus_f)
        return plan_corollary(
            CorollaryTag(plan.case),
            moduli.L_fh,
            plan.c,
            plan.beta or 0.0,
            sigma_h=kernel.strong_convexity,
            L_h=kernel.grad_lipschitz,
            L_f=problem.f.lipschitz if kernel.name == "euclidean" else None,
            gamma=plan.gamma,
        ).params
    regime = {"auto": None, "thmSD-A": "A", "thmSD-B": "B"}[mode]
    if plan.gamma is None and plan.alpha is None:
        return plan_auto(problem, regime=regime, beta=plan.beta, c=plan.c)

    moduli = normalize_moduli(problem.f.sigma_f, problem.f.sigma_minus_f)
    gamma = plan.gamma if plan.gamma is not None else plan.alpha / moduli.L_fh
    beta = plan.beta or 0.0
    if regime == "B":
        L_f = problem.f.lipschitz if problem.kernel.name == "euclidean" else None
        L_fbeta = estimate_L_fbeta(moduli, beta, gamma, kernel=problem.kernel, L_f=L_f)
        return plan_thmSD_B(moduli, beta, gamma, problem.kernel.strong_convexity, L_fbeta, plan.c)
    return plan_thmSD_A(moduli, beta, gamma, plan.c)


def starting_points(problem: ProblemInstance, config: RunConfig) -> tuple[np.ndarray, np.ndarray]:
    if config.start is not None:
        x_minus1 = np.asarray(config.start["x_minus1"], dtype=float)
        x0 = np.asarray(config.start["x0"], dtype=float)
        for label, point in (("start.x_minus1", x_minus1), ("start.x0", x0)):
            if point.shape != (problem.dimension,):
                raise ConfigError(f"{label}: expected {problem.dimension} coordinates")
        return x_minus1, x0
    x0 = problem.sample_feasible(np.random.default_rng(config.seed), 1)[0]
    return x0.copy(), x0


@dataclass(slots=True)
class RunManifest:
    instance: str
    instance_params: dict[str, Any]
    kernel: str
    plan_mode: str
    params: dict[str, Any]
    x_minus1: list[float]
    x0: list[float]
    stop: dict[str, Any]
    linesearch: dict[str, Any]
    seed: int
    tie_break: str
    toolkit_version: str = __version__
    run_id: str = ""

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "RunManifest":
        return cls(**data)


@dataclass(slots=True)
class Execution:
    result: RunResult
    manifest: RunManifest
    problem: ProblemInstance
    trace_path: Path | None = None
    manifest_path: Path | None = None


def _make_run_id() -> str:
    return f"RUN-{uuid.uuid4().hex[:10].upper()}"


def run_manifest(problem: ProblemInstance, manifest: RunManifest) -> RunResult:
    """Execute exactly what ``manifest`` describes; certification failures come back as results."""
    params = PlannedParams.from_dict(manifest.params)
    stop = StopCriteria(**manifest.stop)
    x_minus1 = np.asarray(manifest.x_minus1, dtype=float)
    x0 = np.asarray(manifest.x0, dtype=float)
    try:
        if manifest.linesearch.get("enabled"):
            ls = manifest.linesearch
            cfg = LinesearchConfig(delta=ls["delta"], max_backtracks=ls["max_backtracks"])
            provider = broyden_direction_provider(ls["memory"]) if ls["provider"] == "broyden" else zero_direction_provider()
            return run_ls(problem, build_merit_spec(problem, params), cfg, provider, x_minus1, x0, stop, manifest.tie_break)
        return run(problem, params, x_minus1, x0, stop, manifest.tie_break)
    except CertificationError as exc:
        return exc.result


def execute(config: RunConfig) -> Execution:
    problem = build_problem(config)
    params = plan_for(problem, config.plan)
    x_minus1, x0 = starting_points(problem, config)
    manifest = RunManifest(
        instance=config.instance,
        instance_params=dict(problem.params),
        kernel=problem.kernel.name,
        plan_mode=config.plan.mode,
        params=params.to_dict(),
        x_minus1=x_minus1.tolist(),
        x0=x0.tolist(),
        stop=asdict(config.stop),
        linesearch=asdict(config.linesearch),
        seed=config.seed,
        tie_break=config.tie_break or get_setting("BIFRB_TIE_BREAK"),
        run_id=_make_run_id(),
    )
    result = run_manifest(problem, manifest)
    execution = Execution(result=result, manifest=manifest, problem=problem)
    if config.output_dir:
        trace_path = Path(config.output_dir) / f"{config.instance}-{manifest.run_id}.csv"
        execution.trace_path = write_trace_csv(trace_path, result.trace)
        execution.manifest_path = write_manifest(manifest_path_for(trace_path), manifest.to_dict())
    return execution


def replay(manifest_path: Path | str) -> RunResult:
    manifest = RunManifest.from_dict(read_manifest(manifest_path))
    if manifest.toolkit_version != __version__:
        logger.warning("Replaying a manifest from toolkit %s with %s", manifest.toolkit_version, __version__)
    problem = build_instance(manifest.instance, **manifest.instance_params)
    return run_manifest(problem, manifest)


def traces_match(left: RunResult, right: RunResult) -> bool:
    """Compare every trace column except wall_ns."""
    if len(left.trace) != len(right.trace):
        return False
    for a, b in zip(left.trace, right.trace):
        row_a, row_b = a.as_row(), b.as_row()
        row_a.pop("wall_ns")
        row_b.pop("wall_ns")
        if row_a != row_b or not np.array_equal(a.x, b.x):
            return False
    return True
