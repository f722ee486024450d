from __future__ import annotations

from classes.errors import ConfigError, ShapeError

from pathlib import Path
import numpy as np

import config

class DegradationLabel:
    """
    Degradation kinds present in an image with per-kind intensity in [0, 1]
    An empty label denotes a clean image.

    :param intensities: dict kind -> intensity
    """
    def __init__(self, intensities: dict = None):
        intensities = dict(intensities or {})
        for kind, value in intensities.items():
            if kind not in config.DEGRADATION_KINDS:
                raise ConfigError(f'unknown degradation kind: {kind}')
            if not 0.0 <= float(value) <= 1.0:
                raise ConfigError(f'intensity of {kind} must lie in [0, 1], got {value}')
        # fixed kind order keeps serialisation deterministic
        self.intensities = {kind: float(intensities[kind]) for kind in config.DEGRADATION_KINDS if kind in intensities}

    @property
    def kinds(self) -> list:
        return list(self.intensities)

    @property
    def is_clean(self) -> bool:
        return not self.intensities

    def to_fields(self) -> (str, str):
        """
        Manifest columns: comma separated kinds and intensities ('-' for clean)
        """
        if self.is_clean:
            return '-', '-'
        return ','.join(self.kinds), ','.join(f'{v:g}' for v in self.intensities.values())

    @classmethod
    def from_fields(cls, kinds: str, intensities: str) -> DegradationLabel:
        if kinds.strip() in ('', '-'):
            return cls()
        names = [k.strip() for k in kinds.split(',')]
        values = [float(v) for v in intensities.split(',')]
        if len(names) != len(values):
            raise ConfigError(f'kinds {names} and intensities {values} differ in length')
        return cls(dict(zip(names, values)))

    def __eq__(self, other):
        return isinstance(other, DegradationLabel) and self.intensities == other.intensities

    def __repr__(self):
        return f'DegradationLabel({self.intensities})'

class ImagePair:
    """
    Clean / degraded images with the label of the degradation

    :param clean: array [3, H, W] in [0, 1]
    :param degraded: array [3, H, W] in [0, 1]
    :param label: DegradationLabel
    :param path: manifest path of the degraded image
    """
    def __init__(self, clean: np.ndarray, degraded: np.ndarray, label: DegradationLabel, path: str = None):
        if clean.shape != degraded.shape:
            raise ShapeError(f'clean {clean.shape} and degraded {degraded.shape} shapes differ')
        self.clean = np.clip(clean, 0.0, 1.0).astype(np.float32)
        self.degraded = np.clip(degraded, 0.0, 1.0).astype(np.float32)
        self.label = label
        self.path = path

class ManifestRecord:
    """
    One manifest line
    :param path: degraded image path relative to the manifest directory
    :param label: DegradationLabel
    """
    def __init__(self, path: str, label: DegradationLabel):
        self.path = path
        self.label = label

    def clean_path(self) -> str:
        """
        The clean counterpart: same file name under the sibling 'clean' directory
        """
        degraded = Path(self.path)
        return str(degraded.parent.parent / 'clean' / degraded.name)

class DatasetManifest:
    """
    Ordered image records plus the seed they were synthesised with

    :param records: list of ManifestRecord
    :param seed: manifest seed
    :param root: directory the record paths are relative to
    """
    def __init__(self, records: list, seed: int, root: str = '.'):
        self.records = list(records)
        self.seed = seed
        self.root = root

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def resolve(self, path: str) -> str:
        return str(Path(self.root) / path)
