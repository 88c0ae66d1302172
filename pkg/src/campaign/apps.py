from django.apps import AppConfig


class CampaignAppConfig(AppConfig):
    name = 'campaign'
