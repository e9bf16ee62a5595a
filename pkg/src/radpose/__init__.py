"""radpose: radar-to-pose regression with calibrated uncertainty.

Self-contained pipeline: FMCW scatterer simulator, radar-cube
preprocessing, a variational pose regressor trained with its own
reverse-mode autodiff, uncertainty calibration machinery, and latent-space
augmentation for activity classification.
"""

__version__ = "0.1.0"

from .radar import RadarCube, RadarDims, preprocess, read_cube, write_cube
from .rng import Rng

__all__ = [
    "RadarCube",
    "RadarDims",
    "Rng",
    "preprocess",
    "read_cube",
    "write_cube",
    "__version__",
]
