"""Two-stage GAN image inpainting with per-scale fakeness attention maps."""

from .config import LossWeights, MaskSpec, ModelConfig, RunConfig, TrainConfig
from .model import Discriminator, Generator, GeneratorOutput, build_discriminator, build_generator

__version__ = "0.1.0"

__all__ = [
    "Discriminator",
    "Generator",
    "GeneratorOutput",
    "LossWeights",
    "MaskSpec",
    "ModelConfig",
    "RunConfig",
    "TrainConfig",
    "build_discriminator",
    "build_generator",
    "__version__",
]
