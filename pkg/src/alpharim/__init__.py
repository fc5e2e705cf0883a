"""Sparsely activated modular recurrent forecasting with exponentially
smoothed (alpha_t) module dynamics, recurrent baselines, a price/sentiment
data pipeline and a training/evaluation harness."""

__version__ = "0.1.0"

from .numeric import ShapeError, finite_diff_grad, glorot_uniform, make_rng, matmul, orthogonal_init, softmax_rows
from .rim import AlphaTRim, RimConfig

__all__ = [
    "__version__",
    "AlphaTRim",
    "RimConfig",
    "ShapeError",
    "finite_diff_grad",
    "glorot_uniform",
    "make_rng",
    "matmul",
    "orthogonal_init",
    "softmax_rows",
]
