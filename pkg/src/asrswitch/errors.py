"""Exception hierarchy shared by all modules."""


class SwitchError(Exception):
    """Base class for package errors."""


class InvalidInputError(SwitchError, ValueError):
    pass


class UndefinedRatioError(SwitchError, ValueError):
    """A power ratio was requested with a zero or negative power."""


class EstimationUnavailableError(SwitchError):
    """Noise power cannot be estimated (no speaker-inactive frame)."""


class FormatError(SwitchError, ValueError):
    """A file on disk is truncated, corrupt, or of an unknown version."""


class ArchitectureMismatchError(FormatError):
    pass


class ConfigurationError(SwitchError):
    """Prerequisites for a requested operation are missing."""


class AdapterError(SwitchError):
    """An external SE/ASR adapter failed for a particular utterance."""

    def __init__(self, message, utt_id=None, diagnostics=""):
        self.utt_id = utt_id
        self.diagnostics = diagnostics
        prefix = f"[{utt_id}] " if utt_id is not None else ""
        full = prefix + message
        if diagnostics:
            full += "\n" + diagnostics.strip()
        super().__init__(full)
