"""Exception hierarchy shared by all vxtsn modules."""


class VxtsnError(Exception):
    pass


class FrameError(VxtsnError):
    """Malformed or unencodable frame/packet."""


class TruncatedError(FrameError):
    pass


class OversizeError(FrameError):
    pass


class NotVxlanError(FrameError):
    pass


class ChecksumError(FrameError):
    pass


class MappingError(VxtsnError):
    pass


class UnmappedVniError(MappingError):
    pass


class UnmappedDscpError(MappingError):
    pass


class UnclassifiedPacketError(MappingError):
    pass


class UnboundQfiError(MappingError):
    pass


class NoRouteError(VxtsnError):
    pass


class TagMismatchError(VxtsnError):
    pass


class ConfigError(VxtsnError):
    """Configuration problem; ``errors`` lists every diagnostic found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))
