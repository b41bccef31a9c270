"""Exception types shared across the engine."""


class ShipwrightError(Exception):
    pass


class InvalidSpecError(ShipwrightError, ValueError):
    """A generation or sampling spec that cannot be honoured."""


class DecodeError(ShipwrightError, ValueError):
    """A result buffer is truncated or corrupt."""


class RangeFault(ShipwrightError, IndexError):
    """Read outside a registered memory region (models an RDMA protection fault)."""


class ProtocolError(ShipwrightError, ConnectionError):
    """Malformed frame on the socket backend; the connection must be dropped."""


class CalibrationError(ShipwrightError, RuntimeError):
    pass


class PeerClosed(ProtocolError):
    """The peer closed the connection cleanly between frames."""
