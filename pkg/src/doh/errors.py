"""Exception types shared across the codec."""

from __future__ import annotations


class CorruptDataError(Exception):
    """A byte stream failed structural validation (magic, CRC, bounds)."""


class TrainingDiverged(RuntimeError):
    """Loss became non-finite; carries the last finite parameter snapshot."""

    def __init__(self, message: str, last_state=None, history=None):
        super().__init__(message)
        self.last_state = last_state
        self.history = history if history is not None else []
