"""
Exception hierarchy shared by the services, the API routers and the CLI.
"""

from typing import Optional


class PickDropError(Exception):
    """Base class for every expected failure of the planning pipeline"""


class InvalidInputError(PickDropError, ValueError):
    pass


class MapStateError(PickDropError):
    pass


class EmptyMapError(PickDropError):
    pass


class UnreachableTargetError(PickDropError):
    pass


class NoPathError(PickDropError):
    pass


class NoGraspError(PickDropError):
    pass


class NoReceptacleError(PickDropError):
    pass


class DegenerateReceptacleError(PickDropError):
    pass


class DropOutOfReachError(PickDropError):
    pass


class SceneSpecError(PickDropError):
    pass


class ScanFormatError(PickDropError):
    """Malformed scan archive; frame_index is None for manifest-level problems"""

    def __init__(self, message: str, frame_index: Optional[int] = None):
        self.frame_index = frame_index
        if frame_index is not None:
            message = f"frame {frame_index}: {message}"
        super().__init__(message)


_HTTP_STATUS = {
    InvalidInputError: 400,
    ScanFormatError: 400,
    SceneSpecError: 400,
    MapStateError: 409,
    EmptyMapError: 409,
}


def http_status(error: PickDropError) -> int:
    """Status code a router answers with for a pipeline failure"""
    for cls in type(error).__mro__:
        if cls in _HTTP_STATUS:
            return _HTTP_STATUS[cls]
    return 422
