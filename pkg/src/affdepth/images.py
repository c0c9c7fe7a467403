"""Per-pixel map types shared by the reconstruction modules."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

BACKGROUND = 0
CONTAIN = 1
WRAP_GRASP = 2
SUPPORT = 3
CLASS_NAMES = ("background", "contain", "wrap-grasp", "support")
NUM_CLASSES = 3  # foreground affordance classes


@dataclass
class DepthImage:
    """Metric depth with a per-pixel validity mask.

    Valid pixels hold finite positive depths in meters; invalid pixels hold
    0 (enforced by :meth:`validate`, which loaders and the synthetic
    generator call; intermediate solver outputs may be unsanitized).
    """

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.values.shape != self.valid.shape or self.values.ndim != 2:
            raise InvalidInputError("depth values and validity must be equal 2-D shapes")

    @property
    def shape(self):
        return self.values.shape

    def copy(self) -> "DepthImage":
        return DepthImage(self.values.copy(), self.valid.copy())

    def validate(self) -> "DepthImage":
        v = self.values[self.valid]
        if v.size and (not np.all(np.isfinite(v)) or np.any(v <= 0)):
            raise InvalidInputError("valid depth pixels must be finite and positive")
        if np.any(self.values[~self.valid] != 0):
            raise InvalidInputError("invalid depth pixels must carry value 0")
        return self

    @staticmethod
    def from_values(values: np.ndarray, invalid_value: float = 0.0) -> "DepthImage":
        values = np.asarray(values, dtype=np.float64)
        valid = np.isfinite(values) & (values != invalid_value) & (values > 0)
        out = np.where(valid, values, 0.0)
        return DepthImage(out, valid)


@dataclass
class NormalMap:
    """Unit surface normals in the camera frame with a validity mask."""

    vectors: np.ndarray  # (H, W, 3)
    valid: np.ndarray  # (H, W)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.vectors.ndim != 3 or self.vectors.shape[2] != 3 \
                or self.vectors.shape[:2] != self.valid.shape:
            raise InvalidInputError("normal map must be (H, W, 3) with an (H, W) mask")

    @property
    def shape(self):
        return self.valid.shape

    def validate(self) -> "NormalMap":
        norms = np.linalg.norm(self.vectors[self.valid], axis=-1)
        if norms.size and np.any(np.abs(norms - 1.0) > 1e-6):
            raise InvalidInputError("valid normals must be unit length")
        return self


@dataclass
class BoundaryMap:
    """Per-pixel (none, occlusion, contact) probabilities."""

    probs: np.ndarray  # (H, W, 3)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 3 or self.probs.shape[2] != 3:
            raise InvalidInputError("boundary map must be (H, W, 3)")

    @property
    def shape(self):
        return self.probs.shape[:2]

    @property
    def none(self) -> np.ndarray:
        return self.probs[..., 0]

    @property
    def occlusion(self) -> np.ndarray:
        return self.probs[..., 1]

    @property
    def contact(self) -> np.ndarray:
        return self.probs[..., 2]

    def validate(self) -> "BoundaryMap":
        if not np.all(np.isfinite(self.probs)) or self.probs.min() < 0 or self.probs.max() > 1:
            raise InvalidInputError("boundary probabilities must lie in [0, 1]")
        return self
