from django.apps import AppConfig


class HilAppConfig(AppConfig):
    name = 'hil'
