from django.core.management.base import BaseCommand, CommandError

from campaign.conf import load_run_config, validate
from campaign.exceptions import ConfigError
from campaign.management.commands.run import EXIT_CONFIG
from campaign.runner import campaign_inputs


class Command(BaseCommand):
    help = 'Loads and checks a RunConfig document without running anything.'

    def add_arguments(self, parser):
        parser.add_argument('config')

    def handle(self, *args, **options):
        try:
            config = validate(load_run_config(options['config']))
            routes, scenarios = campaign_inputs(config)
        except ConfigError as exc:
            raise CommandError(str(exc), returncode=EXIT_CONFIG)
        self.stdout.write(f'{config.display_label}: {len(routes)} route(s), '
                          f'{len(scenarios)} scenario(s), '
                          f'{config.repetitions} repetition(s)')
