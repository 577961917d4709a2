from __future__ import annotations

from typing import Any

from django.conf import settings

DEFAULTS: dict[str, Any] = {
    "BIFRB_OUTPUT_DIR": "runs",
    "BIFRB_CERT_SLACK": 1e-9,
    "BIFRB_DEBUG_CHECKS": False,
    "BIFRB_MIRROR_TOL": 1e-12,
    "BIFRB_MAX_BACKTRACKS": 40,
    "BIFRB_LS_DELTA": 0.5,
    "BIFRB_RECORD_RUNS": True,
    "BIFRB_TIE_BREAK": "farthest",
}


def get_setting(name: str, default: Any = None) -> Any:
    """Read a toolkit setting, tolerating use of the numerics without a configured Django project."""
    fallback = DEFAULTS.get(name, default) if default is None else default
    if not settings.configured:
        return fallback
    return getattr(settings, name, fallback)
