"""Exception taxonomy. The CLI maps these groups onto distinct exit codes."""


class ProudError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(ProudError):
    """Bad CLI flags, config file, or inconsistent run configuration."""


class DimensionError(ProudError):
    """Matrix / vector shape mismatch."""


class CapacityError(ProudError):
    """Data does not fit the available plaintext slots."""


class LayoutError(ProudError):
    """Packed-plaintext layout does not match the requested operation."""


class ParamsError(ProudError):
    """Unsupported or inconsistent HE parameters."""


class FingerprintError(ProudError):
    """Key / ciphertext belongs to a different parameter set."""


class LevelError(ProudError):
    """Multiplicative budget exhausted or level/scale mismatch."""


class DomainError(ProudError):
    """Ring element is in the wrong representation (coefficient vs evaluation)."""


class TransportError(ProudError):
    """Channel-level failure (disconnect, malformed frame, oversize frame)."""


class FrameError(TransportError):
    """Malformed or unsupported frame."""


class ProtocolError(ProudError):
    """Protocol-order violation or aborted session."""


class SessionAborted(ProtocolError):
    """Peer reported an error frame; carries the remote code and detail."""

    def __init__(self, code: int, detail: str):
        super().__init__(f"peer aborted session (code {code}): {detail}")
        self.code = code
        self.detail = detail


class ModelError(ProudError):
    """Model file is corrupt, inconsistent, or uses unsupported layers."""


class IncompleteSessionError(ProudError):
    """Report requested before the session reached its final phase."""
