from django.contrib import admin

from .models import SolverRun


@admin.register(SolverRun)
class SolverRunAdmin(admin.ModelAdmin):
    list_display = ("run_id", "instance_name", "corollary_tag", "status", "iterations", "final_residual", "created_at")
    list_filter = ("status", "instance_name", "certified")
    search_fields = ("run_id", "instance_name")
    readonly_fields = ("manifest", "created_at", "updated_at")
