"""Bi-temporal image translation with shared-weight generators and cross-cycle consistency."""

from pairtranslate.errors import (
    ConfigError,
    DimensionError,
    GenerationError,
    IntegrityError,
    NumericError,
)
from pairtranslate.model import Domain, GeneratorConfig, GeneratorPair, LatentCode, build_generator_pair
from pairtranslate.adversary import DiscriminatorConfig, MultiScaleDiscriminator, build_discriminator, score_pair

__version__ = "0.1.0"
