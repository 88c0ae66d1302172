class CampaignException(Exception):
    pass


class ConfigError(CampaignException):
    pass


class EpisodeAborted(CampaignException):
    pass


class DeleteEntityException(CampaignException):
    pass
