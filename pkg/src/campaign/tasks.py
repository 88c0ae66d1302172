from celery import shared_task

from campaign.models import Episode
from campaign.runner import execute_episode


@shared_task(name='run_episode', ignore_result=False)
def run_episode_task(episode_id: int) -> int:
    """
    Runs one pending episode of a campaign; returns its final status.
    """
    episode = Episode.objects.pending(pk=episode_id).select_related(
        'campaign').first()
    if episode is None:
        return Episode.objects.get(pk=episode_id).status
    return execute_episode(episode).status
