import json

from django.core.management.base import BaseCommand, CommandError

from ...services.rates import RateFitError, rates_from_rows
from ...services.trace_store import TraceFormatError, read_trace_csv


class Command(BaseCommand):
    help = "Fit linear and power convergence rates to the merit column of a trace CSV."

    def add_arguments(self, parser):
        parser.add_argument("trace", help="Trace CSV written by solve.")
        parser.add_argument("--phi-star", type=float, dest="phi_star", help="Optimal value; estimated from the trace if omitted.")

    def handle(self, *args, **options):
        try:
            rows = read_trace_csv(options["trace"])
            report = rates_from_rows(rows, options["phi_star"])
        except FileNotFoundError as exc:
            raise CommandError(f"Trace not found: {options['trace']}", returncode=1) from exc
        except (TraceFormatError, RateFitError) as exc:
            raise CommandError(str(exc), returncode=1) from exc

        self.stdout.write(json.dumps(report.to_dict(), indent=2))
        self.stdout.write(self.style.SUCCESS(f"Regime: {report.regime.value}"))
