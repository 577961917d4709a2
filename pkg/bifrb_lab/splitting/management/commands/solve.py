from django.core.management.base import BaseCommand, CommandError

from ...problem import ProxError
from ...kernel import DomainExitError, MirrorMapError
from ...services.experiments import execute
from ...services.registry import record_run
from ...solver import RunStatus
from ..run_options import CONFIG_ERRORS, add_run_arguments, config_from_options


class Command(BaseCommand):
    help = "Run the inertial forward-reflected-backward method (optionally with linesearch) and write its trace."

    def add_arguments(self, parser):
        add_run_arguments(parser)

    def handle(self, *args, **options):
        config = config_from_options(options)
        try:
            execution = execute(config)
        except CONFIG_ERRORS as exc:
            raise CommandError(str(exc), returncode=1) from exc
        except (ProxError, DomainExitError, MirrorMapError) as exc:
            raise CommandError(f"Run aborted: {exc}", returncode=1) from exc

        record_run(execution)
        result = execution.result
        params = result.params
        last = result.trace[-1] if result.trace else None
        self.stdout.write(
            f"{execution.manifest.run_id} {config.instance}: {params.corollary_tag.value} "
            f"gamma={params.gamma:.6g} beta={params.beta:.6g} c={params.c:.6g} certified={params.certified}"
        )
        if last is not None:
            self.stdout.write(
                f"iterations={result.iterations} phi={last.phi} merit={last.merit:.17g} residual={last.residual_norm:.3e}"
            )
        if execution.trace_path:
            self.stdout.write(f"trace: {execution.trace_path}")

        if result.status is RunStatus.MAX_ITERS:
            raise CommandError(f"Stopped after max_iters={config.stop.max_iters} without convergence.", returncode=2)
        if result.status is RunStatus.CERTIFICATION_FAILED:
            raise CommandError(f"Certification failed: {result.message}", returncode=3)
        self.stdout.write(self.style.SUCCESS(f"Converged in {result.iterations} iterations."))
