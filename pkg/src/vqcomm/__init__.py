"""Vector-quantized communication bottlenecks for structured neural models."""

__version__ = "0.1.0"

from . import autodiff, models, nn, optim, quantizer, tasks, theory

__all__ = ["autodiff", "models", "nn", "optim", "quantizer", "tasks", "theory", "__version__"]
