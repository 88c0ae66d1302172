class SimException(Exception):
    pass


class InvalidRoute(SimException):
    pass


class InvalidActor(SimException):
    def __init__(self, field, message):
        super().__init__(f'{field}: {message}')
        self.field = field


class InvalidScenario(SimException):
    pass
