class ExportError(Exception):
    """Base class for export tool failures."""


class UnknownModel(ExportError):
    """Model name not present in the registry."""


class RetrievalError(ExportError):
    """Pretrained weights could not be downloaded or loaded."""


class UnsupportedArchitecture(ExportError):
    """Module structure does not match the supported ViT family."""


class ParityFailure(ExportError):
    """Exported graph disagrees with the source model beyond tolerance."""
