"""Exception types shared across the package."""


class SeqAlignError(Exception):
    """Base class for errors raised by seqalign."""


class ConfigError(SeqAlignError, ValueError):
    """Invalid configuration value or section."""


class ContainerFormatError(SeqAlignError, ValueError):
    """Malformed binary container. Carries the byte offset of the defect."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ManifestError(SeqAlignError, ValueError):
    """Dataset manifest is inconsistent with the files it references."""


class AugmentationError(SeqAlignError, RuntimeError):
    """Augmentation could not satisfy its guarantees for a sequence."""


class TrainingError(SeqAlignError, RuntimeError):
    """Training aborted; message carries replay information."""
