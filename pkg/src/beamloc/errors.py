"""Exception types raised across the package."""


class BeamlocError(Exception):
    """Base class for all package-specific errors."""


class BoxBoundsError(BeamlocError, ValueError):
    """A grid box or pixel rect violates the bounds of its frame."""


class DimensionError(BeamlocError, ValueError):
    """Array shapes disagree with the declared grid/channel/class layout."""


class ProviderError(BeamlocError):
    """Feature extraction failed; the current image should be abandoned."""


class BridgeError(ProviderError):
    """Base class for failures while talking to a bridge worker."""


class BridgeProtocolError(BridgeError):
    """The worker sent a frame that violates the wire protocol."""


class BridgeTimeoutError(BridgeError):
    """The worker did not answer within the configured deadline."""


class BridgeDimensionError(BridgeError):
    """A tensor from the worker disagrees with the handshake dimensions."""


class BridgeRemoteError(BridgeError):
    """The worker answered with an error frame."""

    def __init__(self, code: str, message: str = ""):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message
