class MetricsException(Exception):
    pass


class InvalidPenaltyTable(MetricsException):
    pass


class InvalidThresholds(MetricsException):
    pass


class EmptyAggregate(MetricsException):
    pass
