import os

from celery import Celery

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'drivebench.settings')

# Broker and eager mode come from the CELERY_* keys in settings.
app = Celery('drivebench')
app.config_from_object('django.conf:settings', namespace='CELERY')
app.autodiscover_tasks()
