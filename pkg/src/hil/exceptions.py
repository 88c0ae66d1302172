class ProtocolException(Exception):
    pass


class NeedMoreBytes(ProtocolException):
    def __init__(self, needed):
        super().__init__(f'need {needed} more byte(s)')
        self.needed = needed


class FrameTooLarge(ProtocolException):
    pass


class ProtocolError(ProtocolException):
    pass


class ConnectionClosed(ProtocolException):
    pass


class SessionTimeout(ProtocolException):
    pass


class InvalidPlatform(ProtocolException):
    pass


class PlatformMismatch(InvalidPlatform):
    pass


class EmptyRouteGroup(ProtocolException):
    pass
