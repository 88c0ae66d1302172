import logging

from django.core.management.base import BaseCommand, CommandError

from campaign.conf import load_run_config
from campaign.exceptions import CampaignException, ConfigError
from campaign.runner import run_campaign
from metrics.report import render_report

logger = logging.getLogger(__name__)

EXIT_CONFIG = 1
EXIT_FAILURES = 2
EXIT_FATAL = 3


class Command(BaseCommand):
    help = 'Runs an evaluation campaign described by a RunConfig document.'

    def add_arguments(self, parser):
        parser.add_argument('config', help='RunConfig JSON document')
        parser.add_argument('--output-dir', dest='output_dir')
        parser.add_argument('--suite', dest='scenario_suite',
                            help='threat scenario suite directory')
        parser.add_argument('--routes', help='route library directory')
        parser.add_argument('--route-id', dest='route_ids', action='append',
                            help='run only this route (repeatable)')
        parser.add_argument('--repetitions', type=int)
        parser.add_argument('--seed', type=int)
        parser.add_argument('--max-frames', dest='max_frames', type=int)
        parser.add_argument('--parallelism', type=int)
        parser.add_argument('--label')

    def handle(self, *args, **options):
        overrides = {key: options[key] for key in (
            'output_dir', 'scenario_suite', 'routes', 'route_ids',
            'repetitions', 'seed', 'max_frames', 'parallelism', 'label')}
        try:
            config = load_run_config(options['config'], **overrides)
            result = run_campaign(config)
        except ConfigError as exc:
            raise CommandError(f'config error: {exc}', returncode=EXIT_CONFIG)
        except CampaignException as exc:
            raise CommandError(f'campaign failed: {exc}', returncode=EXIT_FATAL)
        self.stdout.write(render_report(result.aggregate), ending='')
        self.stdout.write(f'{result.done} episode(s) done, {result.failed} '
                          f'failed; artifacts in {result.output_dir}')
        if result.has_failures:
            raise CommandError(f'{result.failed} episode(s) failed',
                               returncode=EXIT_FAILURES)
