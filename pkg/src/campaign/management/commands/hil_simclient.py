import json
from dataclasses import asdict

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from campaign.management.commands.run import (EXIT_CONFIG,
                                              EXIT_FAILURES)
from hil.client import sim_vehicle_client
from hil.completion import completion_rate, render_completion_table
from hil.conf import HilConfig
from hil.exceptions import InvalidPlatform
from hil.platforms import PlatformParams
from scengen.exceptions import ScenarioException
from scengen.scenario import load_scenario_file
from sim.exceptions import SimException
from sim.routes import load_route_library


class Command(BaseCommand):
    help = ('Drives simulated physical runs against a HIL server and prints '
            'the route-completion table.')

    def add_arguments(self, parser):
        parser.add_argument('--platform', default='jetbot',
                            help='platform name from settings')
        parser.add_argument('--routes', default=None,
                            help='physical route file or directory, default '
                                 'the bundled lab routes')
        parser.add_argument('--scenario', action='append', default=[],
                            help='scenario file placing static obstacles '
                                 '(repeatable)')
        parser.add_argument('--address', help='host:port of the server')
        parser.add_argument('--runs', type=int, default=1,
                            help='runs per route')
        parser.add_argument('--max-cycles', dest='max_cycles', type=int,
                            default=1000)
        parser.add_argument('--output', help='write run logs as JSON here')

    def handle(self, *args, **options):
        try:
            platform = PlatformParams.from_settings(options['platform'])
            overrides = {'bind': options['address']} \
                if options['address'] else {}
            config = HilConfig.from_settings(**overrides)
            routes = load_route_library(options['routes'] or
                                        settings.DRIVEBENCH['HIL']['ROUTES'])
            scenarios = {scenario.base_route_id: scenario
                         for scenario in map(load_scenario_file,
                                             options['scenario'])}
        except (InvalidPlatform, SimException, ScenarioException, OSError,
                ValueError) as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG)
        if options['runs'] < 1:
            raise CommandError('--runs must be >= 1', returncode=EXIT_CONFIG)

        groups = {}
        for route in routes:
            groups[route.route_id] = [
                sim_vehicle_client(config.address, platform, route,
                                   scenario=scenarios.get(route.route_id),
                                   config=config,
                                   max_cycles=options['max_cycles'])
                for _ in range(options['runs'])]
        report = completion_rate(groups, options['runs'])
        self.stdout.write(render_completion_table(report), ending='')
        if options['output']:
            with open(options['output'], 'w', encoding='utf-8') as handle:
                json.dump({'completion': report.as_dict(),
                           'runs': {route_id: [asdict(log) for log in logs]
                                    for route_id, logs in groups.items()}},
                          handle, indent=2, sort_keys=True)
        aborted = [log for logs in groups.values() for log in logs
                   if log.outcome in ('timeout', 'protocol_error',
                                      'unreachable')]
        if aborted:
            raise CommandError(f'{len(aborted)} run(s) aborted: '
                               f'{aborted[0].diagnostic}',
                               returncode=EXIT_FAILURES)
