from django.apps import AppConfig


class DualsysConfig(AppConfig):
    name = 'dualsys'
