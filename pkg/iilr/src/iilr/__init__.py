"""Learned refinement of paired tomographic reconstructions.

The package maps pairs of complementary ultrasound reconstructions
(a low-resolution transmission image and a high-resolution reflection
image) to a single high-fidelity speed-of-sound estimate with a
convolutional encoder-decoder, and evaluates lesion detectability with
a learned patch observer.
"""

from .errors import (ConfigError, DatasetError, FieldFormatError,
                     IilrError, ShapeError)
from .losses import mse_loss, weight_matrix, wmse_loss
from .model import (ObserverNet, ObserverSpec, UNet, UNetSpec,
                    build_model, desk_spec, paper_spec, parameter_count)
from .train import TrainConfig, finetune_config, load_checkpoint, train

__all__ = [
    "ConfigError", "DatasetError", "FieldFormatError", "IilrError",
    "ShapeError", "mse_loss", "weight_matrix", "wmse_loss",
    "ObserverNet", "ObserverSpec", "UNet", "UNetSpec", "build_model",
    "desk_spec", "paper_spec", "parameter_count", "TrainConfig",
    "finetune_config", "load_checkpoint", "train",
]

__version__ = "0.1.0"
