from django.db import models
from django.db.models import manager


class EpisodeQuerySet(models.QuerySet):

    def delete(self):
        from campaign.exceptions import DeleteEntityException
        raise DeleteEntityException('episodes back traces on disk and '
                                    'cannot be bulk-deleted')


class EpisodeManager(manager.Manager):
    def get_queryset(self):
        return EpisodeQuerySet(self.model, using=self._db)

    def pending(self, **kwargs):
        from .models import Episode
        kwargs['status'] = Episode.Status.PENDING
        return super().get_queryset().filter(**kwargs)

    def done(self, **kwargs):
        from .models import Episode
        kwargs['status'] = Episode.Status.DONE
        return super().get_queryset().filter(**kwargs)

    def failed(self, **kwargs):
        from .models import Episode
        kwargs['status'] = Episode.Status.FAILED
        return super().get_queryset().filter(**kwargs)
