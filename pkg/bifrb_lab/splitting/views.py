import logging
from datetime import datetime

from django.http import JsonResponse
from django.views.decorators.http import require_GET

from .models import SolverRun
from .problem import list_instances

logger = logging.getLogger(__name__)

RUN_LIST_LIMIT = 50


def _json_error(message, status=400):
    return JsonResponse({"error": message}, status=status)


def _serialize_run(run: SolverRun, include_manifest: bool = False) -> dict:
    data = {
        "run_id": run.run_id,
        "instance": run.instance_name,
        "plan_mode": run.plan_mode,
        "corollary_tag": run.corollary_tag,
        "certified": run.certified,
        "status": run.status,
        "exit_code": run.exit_code,
        "iterations": run.iterations,
        "final_phi": run.final_phi,
        "final_merit": run.final_merit,
        "final_residual": run.final_residual,
        "trace_path": run.trace_path,
        "created_at": run.created_at.isoformat(),
    }
    if include_manifest:
        data["manifest"] = run.manifest
    return data


@require_GET
def health_check(_request):
    return JsonResponse(
        {
            "status": "ok",
            "service": "bifrb_lab_api",
            "timestamp": datetime.utcnow().isoformat() + "Z",
        }
    )


@require_GET
def list_instance_catalog(_request):
    payload = [
        {"name": entry.name, "description": entry.description, "defaults": entry.defaults}
        for entry in list_instances()
    ]
    return JsonResponse({"instances": payload})


@require_GET
def list_runs(request):
    runs = SolverRun.objects.all()
    instance = request.GET.get("instance")
    if instance:
        runs = runs.filter(instance_name=instance)
    payload = [_serialize_run(run) for run in runs[:RUN_LIST_LIMIT]]
    return JsonResponse({"runs": payload})


@require_GET
def run_detail(_request, run_id: str):
    try:
        run = SolverRun.objects.get(run_id=run_id)
    except SolverRun.DoesNotExist:
        return _json_error("Run not found.", status=404)
    return JsonResponse(_serialize_run(run, include_manifest=True))
