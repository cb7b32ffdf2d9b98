"""Dense actor-critic network substrate.

One network per agent: tanh hidden layers and a linear output layer whose
first ``action_count`` entries are policy logits and whose last entry is
the state-value estimate. Parameters live in a packed flat array (per
layer: row-major ``(out, in)`` weights, then biases), which keeps the hot
kernels allocation-free and makes whole-model flattening trivial.

Gradients share the ParamSet structure (``Gradient`` is an alias).
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from . import kernels
from .errors import NumericError, ShapeError


@dataclass(frozen=True)
class LayerShape:
    in_dim: int
    out_dim: int

    def __post_init__(self):
        if self.in_dim < 1 or self.out_dim < 1:
            raise ShapeError(f"layer dimensions must be >= 1, got {self}")


class ParamSet:
    """Packed parameters of one dense network.

    ``data`` is the flat float64 array; ``outs``/``ins`` are int64 arrays
    of per-layer dimensions. Hidden layers use tanh, the final layer is
    linear; consecutive layers must chain (out of layer k == in of k+1).
    """

    __slots__ = ("data", "outs", "ins")

    def __init__(self, data, outs, ins, validate=True):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.outs = np.ascontiguousarray(outs, dtype=np.int64)
        self.ins = np.ascontiguousarray(ins, dtype=np.int64)
        if validate:
            self._validate()

    def _validate(self):
        if len(self.outs) != len(self.ins) or len(self.outs) == 0:
            raise ShapeError("need matching, non-empty layer dimension arrays")
        for k in range(len(self.outs) - 1):
            if self.outs[k] != self.ins[k + 1]:
                raise ShapeError(
                    f"layer {k} out_dim {self.outs[k]} does not chain into "
                    f"layer {k + 1} in_dim {self.ins[k + 1]}"
                )
        expect = int(np.sum(self.outs * self.ins + self.outs))
        if self.data.size != expect:
            raise ShapeError(f"packed data has {self.data.size} entries, expected {expect}")
        if not np.all(np.isfinite(self.data)):
            raise NumericError("non-finite parameter entries")

    @classmethod
    def from_arrays(cls, weights, biases, validate=True):
        outs = np.array([w.shape[0] for w in weights], dtype=np.int64)
        ins = np.array([w.shape[1] for w in weights], dtype=np.int64)
        parts = []
        for w, b in zip(weights, biases):
            if b.shape != (w.shape[0],):
                raise ShapeError(f"bias shape {b.shape} does not match weight {w.shape}")
            parts.append(np.asarray(w, dtype=np.float64).ravel())
            parts.append(np.asarray(b, dtype=np.float64).ravel())
        return cls(np.concatenate(parts), outs, ins, validate=validate)

    @property
    def n_layers(self):
        return len(self.outs)

    def shapes(self):
        return [LayerShape(int(i), int(o)) for i, o in zip(self.ins, self.outs)]

    def _offset(self, k):
        sizes = self.outs * self.ins + self.outs
        return int(np.sum(sizes[:k]))

    def weight(self, k):
        """Zero-copy (out, in) view of layer k's weight matrix."""
        o, i = int(self.outs[k]), int(self.ins[k])
        off = self._offset(k)
        return self.data[off : off + o * i].reshape(o, i)

    def bias(self, k):
        o, i = int(self.outs[k]), int(self.ins[k])
        off = self._offset(k) + o * i
        return self.data[off : off + o]

    def copy(self):
        return ParamSet(self.data.copy(), self.outs, self.ins, validate=False)

    def congruent(self, other):
        return np.array_equal(self.outs, other.outs) and np.array_equal(self.ins, other.ins)

    # -- wire format: uint32 LE header (n_layers, then out/in per layer),
    #    then the packed float64 LE payload. Activation tags are implied
    #    (tanh hidden, linear final) and not serialized.
    def to_bytes(self):
        header = struct.pack("<I", self.n_layers)
        for o, i in zip(self.outs, self.ins):
            header += struct.pack("<II", int(o), int(i))
        return header + self.data.astype("<f8", copy=False).tobytes()

    @classmethod
    def from_bytes(cls, blob):
        (n_layers,) = struct.unpack_from("<I", blob, 0)
        outs, ins = [], []
        off = 4
        for _ in range(n_layers):
            o, i = struct.unpack_from("<II", blob, off)
            outs.append(o)
            ins.append(i)
            off += 8
        data = np.frombuffer(blob, dtype="<f8", offset=off).astype(np.float64)
        return cls(data, np.array(outs, dtype=np.int64), np.array(ins, dtype=np.int64))

    def byte_size(self):
        """Serialized size in bytes (payload-size hook for the wireless model)."""
        return 4 + 8 * self.n_layers + 8 * self.data.size

    def __repr__(self):
        dims = "->".join(str(int(d)) for d in [self.ins[0], *self.outs])
        return f"ParamSet({dims}, {self.data.size} params)"


# A gradient is structurally a ParamSet holding per-entry partials.
Gradient = ParamSet


@dataclass(frozen=True)
class AdamState:
    """Adam accumulators congruent with a ParamSet's packed data."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def init_adam(params: ParamSet, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        m=np.zeros_like(params.data),
        v=np.zeros_like(params.data),
        step=0,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
    )


def init_params(shapes, seed: int) -> ParamSet:
    """Glorot-uniform weights, zero biases; bit-reproducible given the seed."""
    shapes = [s if isinstance(s, LayerShape) else LayerShape(*s) for s in shapes]
    for k in range(len(shapes) - 1):
        if shapes[k].out_dim != shapes[k + 1].in_dim:
            raise ShapeError(
                f"layer {k} out_dim {shapes[k].out_dim} does not chain into "
                f"layer {k + 1} in_dim {shapes[k + 1].in_dim}"
            )
    rng = np.random.default_rng(seed)
    parts = []
    for s in shapes:
        bound = math.sqrt(6.0 / (s.in_dim + s.out_dim))
        parts.append(rng.uniform(-bound, bound, size=s.out_dim * s.in_dim))
        parts.append(np.zeros(s.out_dim))
    outs = np.array([s.out_dim for s in shapes], dtype=np.int64)
    ins = np.array([s.in_dim for s in shapes], dtype=np.int64)
    return ParamSet(np.concatenate(parts), outs, ins, validate=False)


def forward(params: ParamSet, state) -> tuple[np.ndarray, float]:
    """Run the network on one state; returns (policy_logits, value)."""
    x = np.ascontiguousarray(state, dtype=np.float64)
    if x.shape != (int(params.ins[0]),):
        raise ShapeError(f"state shape {x.shape} does not match input dim {params.ins[0]}")
    out = kernels.mlp_forward(params.data, params.outs, params.ins, x)
    return out[:-1], float(out[-1])


def forward_batch(params: ParamSet, states) -> np.ndarray:
    """Network outputs for a batch of states, shape (T, action_count + 1)."""
    x = np.ascontiguousarray(states, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != int(params.ins[0]):
        raise ShapeError(f"state batch shape {x.shape} does not match input dim {params.ins[0]}")
    return kernels.mlp_forward_batch(params.data, params.outs, params.ins, x)


def backward(params: ParamSet, state, head_grad) -> Gradient:
    """Exact reverse-mode gradient of <head_grad, net(state)> in all parameters."""
    x = np.ascontiguousarray(state, dtype=np.float64)
    g = np.ascontiguousarray(head_grad, dtype=np.float64)
    if g.shape != (int(params.outs[-1]),):
        raise ShapeError(f"head gradient shape {g.shape} does not match output dim {params.outs[-1]}")
    return traj_backward(params, x[None, :], g[None, :])


def traj_backward(params: ParamSet, states, head_grads) -> Gradient:
    """Gradient summed over a batch of (state, head-gradient) rows."""
    states = np.ascontiguousarray(states, dtype=np.float64)
    head_grads = np.ascontiguousarray(head_grads, dtype=np.float64)
    if states.shape[0] != head_grads.shape[0]:
        raise ShapeError("states and head gradients disagree on batch length")
    grad = kernels.mlp_traj_backward(params.data, params.outs, params.ins, states, head_grads)
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient")
    return Gradient(grad, params.outs, params.ins, validate=False)


def adam_step(params: ParamSet, grad: Gradient, opt: AdamState) -> tuple[ParamSet, AdamState]:
    """Standard bias-corrected Adam update; returns fresh params and state."""
    if not params.congruent(grad):
        raise ShapeError("gradient structure does not match parameters")
    if opt.m.shape != params.data.shape or opt.v.shape != params.data.shape:
        raise ShapeError("optimizer moments do not match parameters")
    new_data = params.data.copy()
    new_m = opt.m.copy()
    new_v = opt.v.copy()
    step = opt.step + 1
    kernels.adam_update(new_data, grad.data, new_m, new_v, step,
                        opt.lr, opt.beta1, opt.beta2, opt.eps)
    return (
        ParamSet(new_data, params.outs, params.ins, validate=False),
        replace(opt, m=new_m, v=new_v, step=step),
    )


def softmax(logits) -> np.ndarray:
    """Numerically stable softmax (max-subtraction)."""
    z = np.asarray(logits, dtype=np.float64)
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_sample(logits, rng) -> int:
    """Draw an action index from softmax(logits) using one uniform variate."""
    zs = [float(v) for v in logits]
    zmax = max(zs)
    es = [math.exp(v - zmax) for v in zs]
    u = rng.random() * sum(es)
    acc = 0.0
    for idx, e in enumerate(es):
        acc += e
        if u < acc:
            return idx
    return len(es) - 1
