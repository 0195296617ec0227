"""Video prediction with alternating spatial/spatiotemporal/temporal
mixers, on a self-contained numpy autodiff engine."""

__version__ = "0.1.0"

from .data import DigitSet, MovingConfig, VideoBatch
from .model import DaMiBlock, SiamConfig, SiamModel, build_model, rollout
from .tensor import Parameter, Tape, Tensor
from .train import TrainConfig, l2_loss, train_run

__all__ = [
    "DaMiBlock", "DigitSet", "MovingConfig", "Parameter", "SiamConfig",
    "SiamModel", "Tape", "Tensor", "TrainConfig", "VideoBatch",
    "build_model", "l2_loss", "rollout", "train_run", "__version__",
]
