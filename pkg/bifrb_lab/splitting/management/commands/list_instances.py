from django.core.management.base import BaseCommand

from ...problem import list_instances


class Command(BaseCommand):
    help = "List the registered problem instances and their default parameters."

    def handle(self, *args, **options):
        entries = list_instances()
        for entry in entries:
            defaults = ", ".join(f"{key}={value!r}" for key, value in entry.defaults.items()) or "-"
            self.stdout.write(f"{entry.name:<18} {defaults}")
            self.stdout.write(f"    {entry.description}")
        self.stdout.write(self.style.SUCCESS(f"{len(entries)} instances registered."))
