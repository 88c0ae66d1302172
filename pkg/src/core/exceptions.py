class CoreException(Exception):
    pass


class InvalidControl(CoreException):
    pass


class InvalidState(CoreException):
    pass


class InvalidTaskSet(CoreException):
    pass


class FrameOrderError(CoreException):
    pass


class TraceFormatError(CoreException):
    pass
