from django.apps import AppConfig


class SimAppConfig(AppConfig):
    name = 'sim'
