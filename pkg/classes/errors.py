class ShapeError(ValueError):
    """Raised when tensor shapes or dimensions do not agree"""


class ConfigError(ValueError):
    """Raised for invalid configuration values or unknown config keys"""


class TapeError(RuntimeError):
    """Raised when backward cannot run (empty tape, non-scalar loss)"""


class CheckpointError(ValueError):
    """Raised for unreadable or corrupted checkpoint files"""


class ImageFormatError(ValueError):
    """Raised for malformed PPM / PGM files"""


class NanLossError(RuntimeError):
    """
    Raised when a loss component becomes non-finite during training
    :param component: name of the offending loss component
    :param step: training step
    """
    def __init__(self, component: str, step: int):
        self.component = component
        self.step = step
        super().__init__(f'non-finite {component} loss at step {step}')
