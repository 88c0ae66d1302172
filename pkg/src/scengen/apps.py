from django.apps import AppConfig


class ScengenConfig(AppConfig):
    name = 'scengen'
