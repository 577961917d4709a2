from django.db import models


class TimeStampedModel(models.Model):
    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)

    class Meta:
        abstract = True


class SolverRun(TimeStampedModel):
    STATUS_CHOICES = [
        ("converged", "Converged"),
        ("max_iters", "Max iterations"),
        ("certification_failed", "Certification failed"),
    ]

    run_id = models.CharField(max_length=40, unique=True)
    instance_name = models.CharField(max_length=80)
    plan_mode = models.CharField(max_length=20)
    corollary_tag = models.CharField(max_length=20, blank=True)
    certified = models.BooleanField(default=True)
    status = models.CharField(max_length=30, choices=STATUS_CHOICES)
    exit_code = models.PositiveSmallIntegerField(default=0)
    iterations = models.PositiveIntegerField(default=0)
    final_phi = models.FloatField(null=True, blank=True)
    final_merit = models.FloatField(null=True, blank=True)
    final_residual = models.FloatField(null=True, blank=True)
    trace_path = models.CharField(max_length=500, blank=True)
    manifest = models.JSONField(default=dict, blank=True)

    class Meta:
        ordering = ["-created_at"]

    def __str__(self):
        return f"{self.run_id} ({self.instance_name}, {self.status})"
