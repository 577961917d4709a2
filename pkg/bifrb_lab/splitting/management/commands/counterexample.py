from django.core.management import call_command
from django.core.management.base import BaseCommand


class Command(BaseCommand):
    help = "Reproduce the two-point counterexample where the stepsize bound is tight (uncertified run)."

    def add_arguments(self, parser):
        parser.add_argument("--alpha", type=float, default=0.5)
        parser.add_argument("--beta", type=float, default=0.0)
        parser.add_argument("--L", type=float, default=1.0, dest="L")
        parser.add_argument("--x0", type=float, default=1.0)
        parser.add_argument("--x-minus1", type=float, default=-1.0, dest="x_minus1")
        parser.add_argument("--max-iters", type=int, default=1000, dest="max_iters")
        parser.add_argument("--output-dir", dest="output_dir")

    def handle(self, *args, **options):
        self.stdout.write(
            f"counterexample: alpha={options['alpha']:g} beta={options['beta']:g} "
            f"x^-1={options['x_minus1']:g} x^0={options['x0']:g}"
        )
        extra = {"output_dir": options["output_dir"]} if options["output_dir"] else {}
        call_command(
            "solve",
            instance="counterexample",
            params=[("L", options["L"])],
            manual=True,
            alpha=options["alpha"],
            beta=options["beta"],
            x0=[options["x0"]],
            x_minus1=[options["x_minus1"]],
            max_iters=options["max_iters"],
            stdout=self.stdout,
            **extra,
        )
