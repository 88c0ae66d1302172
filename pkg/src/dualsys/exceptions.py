class DualSystemException(Exception):
    pass


class TemplateError(DualSystemException):
    pass


class InvalidCandidates(DualSystemException):
    pass


class HistoryError(DualSystemException):
    pass


class ParseFailure(DualSystemException):
    pass


class SelectionFailure(DualSystemException):
    pass
