import json

from django.core.management.base import BaseCommand, CommandError

from ...services.invariants import certify_instance
from ..run_options import CONFIG_ERRORS, add_run_arguments, config_from_options


class Command(BaseCommand):
    help = "Check the model, envelope and merit-decrease invariants for one instance and plan."

    def add_arguments(self, parser):
        add_run_arguments(parser)
        parser.add_argument("--samples", type=int, default=200, help="Random samples per pointwise invariant.")

    def handle(self, *args, **options):
        config = config_from_options(options, default_output=False)
        try:
            report = certify_instance(config, samples=options["samples"])
        except CONFIG_ERRORS as exc:
            raise CommandError(str(exc), returncode=1) from exc

        self.stdout.write(json.dumps(report.to_dict(), indent=2))
        if not report.ok:
            failed = ", ".join(r.name for r in report.results if r.status == "fail")
            raise CommandError(f"Invariants failed for {report.instance}: {failed}", returncode=3)
        self.stdout.write(self.style.SUCCESS(f"All invariants hold or fail as expected for {report.instance}."))
