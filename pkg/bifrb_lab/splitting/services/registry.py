"""
Run registry: one SolverRun row per executed manifest.
"""
from __future__ import annotations

import logging

from django.db import DatabaseError

from ..conf import get_setting
from ..models import SolverRun
from .experiments import Execution

logger = logging.getLogger(__name__)


def record_run(execution: Execution) -> SolverRun | None:
    """Store the run summary; database trouble is logged and never fails the run."""
    if not get_setting("BIFRB_RECORD_RUNS"):
        return None
    result = execution.result
    last = result.trace[-1] if result.trace else None
    try:
        return SolverRun.objects.create(
            run_id=execution.manifest.run_id,
            instance_name=execution.manifest.instance,
            plan_mode=execution.manifest.plan_mode,
            corollary_tag=result.params.corollary_tag.value,
            certified=result.params.certified,
            status=result.status.value,
            exit_code=result.exit_code,
            iterations=result.iterations,
            final_phi=float(last.phi) if last and last.phi.is_finite else None,
            final_merit=last.merit if last else None,
            final_residual=last.residual_norm if last else None,
            trace_path=str(execution.trace_path or ""),
            manifest=execution.manifest.to_dict(),
        )
    except DatabaseError as exc:
        logger.warning("Could not record run %s: %s", execution.manifest.run_id, exc)
        return None
