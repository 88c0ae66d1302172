class ScenarioException(Exception):
    pass


class InvalidScenarioSpec(ScenarioException):
    pass


class DslSyntaxError(ScenarioException):
    def __init__(self, message, line, column):
        super().__init__(f'line {line}, column {column}: {message}')
        self.line = line
        self.column = column


class DslValidationError(ScenarioException):
    def __init__(self, field, message, line=None):
        location = f'line {line}: ' if line is not None else ''
        super().__init__(f'{location}invalid {field}: {message}')
        self.field = field
        self.line = line


class FusionFailed(ScenarioException):
    pass
