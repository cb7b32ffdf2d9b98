"""Desk-scale simulator of collaborative RL agents over a cellular network.

Heterogeneous actor-critic agents train on classic-control tasks while a
base-station coordinator selects task-related sources, allocates OFDMA
resource blocks under per-round deadlines, and aggregates width-scaled
sub-models into each target's global model.
"""

from .kernels import BACKEND_NAME as KERNEL_BACKEND

__version__ = "0.1.0"

__all__ = ["KERNEL_BACKEND", "__version__"]
