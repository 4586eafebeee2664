"""mixlab: vicinal risk minimization (mixup and friends) on a tiny numpy autodiff engine."""

from . import autodiff, data, evaluate, gan, nn, rng, train, vicinal

__version__ = "0.1.0"

__all__ = ["autodiff", "data", "evaluate", "gan", "nn", "rng", "train", "vicinal", "__version__"]
