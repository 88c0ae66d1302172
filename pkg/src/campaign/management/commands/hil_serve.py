import logging

from django.core.management.base import BaseCommand, CommandError

from adapters.exceptions import AdapterException
from campaign.conf import load_run_config, validate
from campaign.exceptions import ConfigError
from campaign.management.commands.run import EXIT_CONFIG
from campaign.runner import build_driver
from hil.conf import HilConfig
from hil.session import DriverController, HilServer

logger = logging.getLogger(__name__)


class Command(BaseCommand):
    help = ('Serves the dual-system driver of a RunConfig to physical or '
            'simulated vehicles over the HIL protocol.')

    def add_arguments(self, parser):
        parser.add_argument('config', help='RunConfig JSON document')
        parser.add_argument('--bind', help='host:port, default from settings')
        parser.add_argument('--cycle-s', dest='cycle_s', type=float)

    def handle(self, *args, **options):
        try:
            config = validate(load_run_config(options['config']))
            overrides = {'bind': options['bind']} if options['bind'] else {}
            hil_config = HilConfig.from_settings(**overrides)
            address = hil_config.address
        except (ConfigError, ValueError) as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG)

        def controller_factory():
            return DriverController(build_driver(config))

        try:
            server = HilServer(address, controller_factory, hil_config,
                               options['cycle_s'])
        except (OSError, AdapterException) as exc:
            raise CommandError(f'cannot serve on {hil_config.bind}: {exc}',
                               returncode=EXIT_CONFIG)
        self.stdout.write(f'serving {config.display_label} on '
                          f'{server.server_address[0]}:'
                          f'{server.server_address[1]}, cycle '
                          f'{server.cycle_s}s')
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            logger.info('stopped after %d session(s)', len(server.sessions))
        finally:
            server.server_close()
