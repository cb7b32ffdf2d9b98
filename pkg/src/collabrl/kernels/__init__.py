"""Numerical kernel backend selection.

The per-step hot kernels (dense forward pass, Adam update, environment
physics steps) exist twice: a Cython extension (``_compiled``) and a pure
NumPy/Python fallback (``reference``). The compiled backend is preferred
when importable; set ``COLLABRL_KERNELS=reference`` or ``=compiled`` to
force one explicitly.

The batched trajectory kernels (``mlp_forward_batch``,
``mlp_traj_backward``) are BLAS-bound vectorized NumPy in either case; a
hand-written loop cannot beat dgemm there, so both backends share the
reference implementation and cross-backend training arithmetic stays
identical for that path.
"""

from __future__ import annotations

import os

from . import reference
from .reference import mlp_forward_batch, mlp_traj_backward  # noqa: F401

_requested = os.environ.get("COLLABRL_KERNELS", "auto").strip().lower()

if _requested == "reference":
    _backend = reference
    HAVE_COMPILED = None
else:
    try:
        from . import _compiled as _backend  # type: ignore[no-redef]

        HAVE_COMPILED = True
    except ImportError:
        if _requested == "compiled":
            raise
        _backend = reference
        HAVE_COMPILED = False

BACKEND_NAME = _backend.BACKEND_NAME

mlp_forward = _backend.mlp_forward
adam_update = _backend.adam_update
cartpole_step = _backend.cartpole_step
acrobot_step = _backend.acrobot_step
episode_chunk = _backend.episode_chunk
episode_return = _backend.episode_return

ENV_CARTPOLE = reference.ENV_CARTPOLE
ENV_ACROBOT = reference.ENV_ACROBOT


def get_backend(name: str):
    """Return a kernel backend module by name ('reference' or 'compiled').

    Raises ImportError if the compiled extension was never built.
    """
    if name == "reference":
        return reference
    if name == "compiled":
        from . import _compiled

        return _compiled
    raise ValueError(f"unknown kernel backend {name!r}")
