"""Value/policy network: kernels, forward/backward, checkpointing, policy."""

from .kernels import HAVE_EXT
from .network import (
    NetworkParameters,
    NumericError,
    backward_batch,
    forward,
    forward_batch,
)

__all__ = [
    "HAVE_EXT",
    "NetworkParameters",
    "NumericError",
    "backward_batch",
    "forward",
    "forward_batch",
]
