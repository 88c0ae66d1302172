import json

from django.core.management.base import BaseCommand, CommandError

from campaign.management.commands.run import EXIT_CONFIG
from metrics.aggregate import aggregate_from_dict, compare_aggregates
from metrics.report import render_report


def read_aggregate(path):
    try:
        with open(path, encoding='utf-8') as handle:
            return aggregate_from_dict(json.load(handle))
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise CommandError(f'{path}: not an aggregate: {exc}',
                           returncode=EXIT_CONFIG)


class Command(BaseCommand):
    help = 'Renders campaign aggregates as one table, one row per aggregate.'

    def add_arguments(self, parser):
        parser.add_argument('aggregates', nargs='+',
                            help='aggregate.json files')
        parser.add_argument('--baseline',
                            help='aggregate to print per-metric drops against')

    def handle(self, *args, **options):
        aggregates = [read_aggregate(path) for path in options['aggregates']]
        drops = None
        if options['baseline']:
            baseline = read_aggregate(options['baseline'])
            drops = [compare_aggregates(baseline, result)
                     for result in aggregates]
        self.stdout.write(render_report(aggregates, drops), ending='')
