"""Channel-splitting super-resolution for MR slices.

A self-contained numpy implementation: tensor kernel, reverse-mode autodiff,
the channel-splitting network family, bicubic / k-space-truncation
degradations, PSNR/SSIM metrics, an Adam training harness and a CLI.
"""

from .autodiff import GradCheckResult, ParamStore, Tape, grad_check
from .metrics import psnr, ssim
from .model import CsnModel, ModelConfig, VARIANTS, build, depth, param_count
from .training import TrainConfig, train

__version__ = "0.1.0"

__all__ = [
    "CsnModel", "GradCheckResult", "ModelConfig", "ParamStore", "Tape",
    "TrainConfig", "VARIANTS", "build", "depth", "grad_check", "param_count",
    "psnr", "ssim", "train", "__version__",
]
