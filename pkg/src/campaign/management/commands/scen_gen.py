from django.core.management.base import BaseCommand, CommandError

from adapters.exceptions import AdapterException
from adapters.factory import build_adapter
from campaign.conf import load_run_config
from campaign.exceptions import ConfigError
from campaign.management.commands.run import (EXIT_CONFIG,
                                              EXIT_FAILURES,
                                              EXIT_FATAL)
from campaign.runner import campaign_inputs
from scengen.exceptions import ScenarioException
from scengen.generate import generate_suite, persist_suite


class Command(BaseCommand):
    help = ('Generates one threat scenario per route with the fast system '
            '(perception, prediction, planning) and the slow system (fusion '
            'into the scenario DSL), and writes the suite directory.')

    def add_arguments(self, parser):
        parser.add_argument('config', help='RunConfig JSON document; its fast '
                                           'and slow adapters and routes are '
                                           'used')
        parser.add_argument('output', help='suite directory to write')
        parser.add_argument('--repair-budget', type=int)
        parser.add_argument('--parallelism', type=int)
        parser.add_argument('--seed', type=int, default=0)

    def handle(self, *args, **options):
        try:
            config = load_run_config(options['config'])
            routes, _ = campaign_inputs(config)
            fast, slow = build_adapter(config.fast), build_adapter(config.slow)
        except (ConfigError, AdapterException) as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG)
        try:
            result = generate_suite(routes, fast, slow,
                                    repair_budget=options['repair_budget'],
                                    parallelism=options['parallelism'],
                                    seed=options['seed'])
            persist_suite(result.scenarios, options['output'], result.skipped)
        except (ScenarioException, OSError) as exc:
            raise CommandError(str(exc), returncode=EXIT_FATAL)
        self.stdout.write(f'{len(result.scenarios)} scenario(s) written to '
                          f'{options["output"]}, {len(result.skipped)} '
                          f'route(s) skipped')
        for entry in result.skipped:
            self.stdout.write(f'  skipped {entry.route_id} after '
                              f'{entry.attempts} attempt(s): {entry.reason}')
        if not result.scenarios:
            raise CommandError('no scenario could be generated',
                               returncode=EXIT_FAILURES)
