"""bandfuse: learned frequency-band image decomposition and IR/VIS fusion.

A small numpy-backed autodiff engine drives a convolutional network
that splits a grayscale image into three high-frequency images and one
low-frequency image whose pixelwise sum reconstructs the input.  The
package trains that network with a gradient + adversarial +
reconstruction objective, fuses infrared/visible pairs band by band,
and scores results with standard fusion-quality metrics.
"""

from .errors import ConfigError, FormatError, NumericError, ShapeError
from .fusion import FusionStrategy, fuse_high, fuse_images, fuse_low
from .network import (Decomposition, DecompositionModel, build_model, forward,
                      load_checkpoint, save_checkpoint)
from .tensor import ConvParams, Tensor, no_grad
from .training import (Discriminator, LossWeights, TrainConfig,
                       adversarial_losses, detail_loss, downsample_reference,
                       laplacian_target, reconstruction_loss, ssim,
                       total_generator_loss, train)

__version__ = "0.1.0"

__all__ = [
    "Tensor", "ConvParams", "no_grad",
    "ShapeError", "NumericError", "FormatError", "ConfigError",
    "DecompositionModel", "Decomposition", "build_model", "forward",
    "save_checkpoint", "load_checkpoint",
    "LossWeights", "TrainConfig", "Discriminator",
    "laplacian_target", "detail_loss", "ssim", "reconstruction_loss",
    "downsample_reference", "adversarial_losses", "total_generator_loss",
    "train",
    "FusionStrategy", "fuse_high", "fuse_low", "fuse_images",
    "__version__",
]
