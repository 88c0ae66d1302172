class AdapterException(Exception):
    pass


class InvalidEndpoint(AdapterException):
    pass


class InvalidResponse(AdapterException):
    pass


class InvalidAdapterConfig(AdapterException):
    pass


class CassetteError(AdapterException):
    pass
