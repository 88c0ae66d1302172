from django.db import models, transaction

from campaign.conf import RunConfig, run_config_from_dict
from campaign.exceptions import DeleteEntityException
from campaign.managers import EpisodeManager


class Campaign(models.Model):
    """
    One evaluation campaign: its config document and the episodes it ran.
    """

    class Status(models.IntegerChoices):
        PENDING = 0, 'pending'
        RUNNING = 1, 'running'
        DONE = 2, 'done'
        PARTIAL = 3, 'done with failures'
        FAILED = 4, 'failed'

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    label = models.CharField(max_length=255, blank=True)
    config = models.JSONField()
    seed = models.IntegerField(default=0)
    repetitions = models.PositiveIntegerField(default=1)
    output_dir = models.CharField(max_length=1024)
    status = models.IntegerField(choices=Status.choices,
                                 default=Status.PENDING)

    @property
    def run_config(self) -> RunConfig:
        return run_config_from_dict(self.config)

    def set_status(self, status: int) -> None:
        self.status = status
        self.save(update_fields=['status', 'updated_at'])


class Episode(models.Model):
    """
    One (route, scenario, repetition) run of a campaign.
    """

    class Status(models.IntegerChoices):
        PENDING = 0, 'pending'
        DONE = 1, 'done'
        FAILED = 2, 'failed'

    created_at = models.DateTimeField(auto_now_add=True)
    updated_at = models.DateTimeField(auto_now=True)
    campaign = models.ForeignKey(Campaign, models.CASCADE,
                                 related_name='episodes')
    route_id = models.CharField(max_length=255)
    scenario_id = models.CharField(max_length=255, null=True, blank=True)
    repetition = models.PositiveIntegerField()
    seed = models.IntegerField()
    status = models.IntegerField(choices=Status.choices,
                                 default=Status.PENDING)
    trace_path = models.CharField(max_length=1024, blank=True)
    terminated_by = models.CharField(max_length=32, blank=True)
    frames = models.PositiveIntegerField(default=0)
    driving_score = models.FloatField(null=True)
    success = models.BooleanField(null=True)
    detail = models.TextField(blank=True)

    objects = EpisodeManager()

    class Meta:
        ordering = ['repetition', 'route_id']
        constraints = [
            models.UniqueConstraint(
                fields=['campaign', 'route_id', 'scenario_id', 'repetition'],
                name='unique_episode_per_repetition'),
        ]

    @property
    def trace_name(self) -> str:
        return f'{self.route_id}__{self.scenario_id or "clean"}__' \
               f'rep{self.repetition}.json'

    @transaction.atomic
    def mark_done(self, trace_path: str, terminated_by: str, frames: int,
                  driving_score: float, success: bool) -> None:
        self.status = Episode.Status.DONE
        self.trace_path = trace_path
        self.terminated_by = terminated_by
        self.frames = frames
        self.driving_score = driving_score
        self.success = success
        self.save()

    @transaction.atomic
    def mark_failed(self, detail: str) -> None:
        self.status = Episode.Status.FAILED
        self.detail = detail
        self.save(update_fields=['status', 'detail', 'updated_at'])

    def delete(self, *args, **kwargs):
        raise DeleteEntityException(f'episode {self.pk} backs '
                                    f'{self.trace_name}')
