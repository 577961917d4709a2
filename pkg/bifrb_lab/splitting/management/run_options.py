"""Arguments shared by the run-oriented management commands."""
from __future__ import annotations

import json

from django.core.management.base import CommandError

from ..conf import get_setting
from ..planner import AffineSmoothTermError, PlanViolationError
from ..problem import InstanceError
from ..services.experiments import PLAN_MODES, PROVIDERS, ConfigError, RunConfig, apply_overrides, load_config
from ..solver import TIE_BREAKS

CONFIG_ERRORS = (ConfigError, PlanViolationError, AffineSmoothTermError, InstanceError)


def _point(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _param(text: str) -> tuple[str, object]:
    name, sep, raw = text.partition("=")
    if not sep or not name:
        raise ValueError(f"expected name=value, got '{text}'")
    try:
        return name, json.loads(raw)
    except json.JSONDecodeError:
        return name, raw


def add_run_arguments(parser) -> None:
    parser.add_argument("--config", help="JSON run configuration; flags below override its keys.")
    parser.add_argument("--instance", help="Registered instance name (see list_instances).")
    parser.add_argument("--param", action="append", type=_param, dest="params", help="Instance parameter name=value.")
    parser.add_argument("--plan", dest="mode", choices=PLAN_MODES, help="Planner mode.")
    parser.add_argument("--case", help="Corollary case such as WC_A or CVX_Bzero (plan=corollary).")
    parser.add_argument("--alpha", type=float, help="Normalized stepsize alpha = gamma * L_fh.")
    parser.add_argument("--gamma", type=float, help="Stepsize gamma.")
    parser.add_argument("--beta", type=float, help="Inertial parameter beta.")
    parser.add_argument("--c", type=float, help="Merit constant c.")
    parser.add_argument("--manual", action="store_true", help="Skip certification (certified=false).")
    parser.add_argument("--linesearch", choices=PROVIDERS, help="Run the linesearch with this direction provider.")
    parser.add_argument("--eps-residual", type=float, dest="eps_residual")
    parser.add_argument("--max-iters", type=int, dest="max_iters")
    parser.add_argument("--x0", type=_point, help="Comma-separated starting point x^0.")
    parser.add_argument("--x-minus1", type=_point, dest="x_minus1", help="Comma-separated x^{-1}.")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--tie-break", choices=TIE_BREAKS, dest="tie_break")
    parser.add_argument("--output-dir", dest="output_dir")


def config_from_options(options: dict, default_output: bool = True) -> RunConfig:
    try:
        if options.get("config"):
            config = load_config(options["config"])
        elif options.get("instance"):
            config = RunConfig(instance=options["instance"])
        else:
            raise ConfigError("either --config or --instance is required")
        x0, x_minus1 = options.get("x0"), options.get("x_minus1")
        start = None
        if x0 is not None or x_minus1 is not None:
            start = {"x0": x0 if x0 is not None else x_minus1, "x_minus1": x_minus1 if x_minus1 is not None else x0}
        output_dir = options.get("output_dir")
        if output_dir is None and default_output and not config.output_dir:
            output_dir = str(get_setting("BIFRB_OUTPUT_DIR"))
        params = options.get("params")
        instance_params = {**config.instance_params, **dict(params)} if params else None
        return apply_overrides(
            config,
            instance_params=instance_params,
            instance=options.get("instance") if options.get("config") else None,
            mode=options.get("mode"),
            case=options.get("case"),
            alpha=options.get("alpha"),
            gamma=options.get("gamma"),
            beta=options.get("beta"),
            c=options.get("c"),
            manual=options.get("manual", False),
            linesearch=options.get("linesearch"),
            eps_residual=options.get("eps_residual"),
            max_iters=options.get("max_iters"),
            seed=options.get("seed"),
            tie_break=options.get("tie_break"),
            output_dir=output_dir,
            start=start,
        )
    except CONFIG_ERRORS as exc:
        raise CommandError(str(exc), returncode=1) from exc
