"""Width-scaled nested sub-models and shell-wise weighted aggregation.

A family of networks shares one "global" architecture; a complexity level
``l`` in [1, L] scales every hidden width by ``shrink**(l-1)`` (rounded,
minimum 1). A level-l sub-model is the top-left corner of the global
parameter tensor: each weight matrix keeps its first rows/columns, each
bias its first entries. Input and output layers never shrink on the
environment-determined dimension, only on the hidden-facing one, so every
sub-model remains a runnable policy.

Aggregation is cover-normalized weighted cell averaging: a global cell
takes the weighted mean of the contributors whose level region covers it
and keeps its previous value when nobody covers it. With one contributor
per nested shell this reduces to the plain union-of-shells update; with
all levels equal it is classical weighted federated averaging.

``align_params`` maps a source network onto arbitrary target layer shapes:
dimensions that shrink are compressed by projecting onto the leading
principal directions of the weight matrix (uncentered PCA via SVD, columns
as features); dimensions that grow are zero-padded (function-preserving);
equal dimensions pass through untouched.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeightError, DomainError, ShapeError
from .nn import LayerShape, ParamSet


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def scaled_width(base: int, level: int, shrink: float) -> int:
    """Hidden width at a complexity level: round(shrink^(l-1) * base), min 1."""
    return max(1, round_half_up(shrink ** (level - 1) * base))


def level_shapes(global_shapes, level: int, shrink: float) -> list[LayerShape]:
    """Layer shapes of the level-l sub-model of a global architecture.

    Hidden dimensions scale; the first layer's input and the last layer's
    output are fixed by the environment and never shrink.
    """
    shapes = [s if isinstance(s, LayerShape) else LayerShape(*s) for s in global_shapes]
    last = len(shapes) - 1
    out = []
    for k, s in enumerate(shapes):
        in_dim = s.in_dim if k == 0 else scaled_width(s.in_dim, level, shrink)
        out_dim = s.out_dim if k == last else scaled_width(s.out_dim, level, shrink)
        out.append(LayerShape(in_dim, out_dim))
    return out


@dataclass(frozen=True)
class GlobalModel:
    """The level-1 (largest) parameters of a model family."""

    params: ParamSet
    num_levels: int
    shrink: float

    def __post_init__(self):
        if self.num_levels < 1:
            raise DomainError(f"num_levels must be >= 1, got {self.num_levels}")
        if not 0.0 < self.shrink <= 1.0:
            raise DomainError(f"shrink must lie in (0, 1], got {self.shrink}")

    def shapes_at(self, level: int) -> list[LayerShape]:
        return level_shapes(self.params.shapes(), level, self.shrink)


def _check_level(gm: GlobalModel, level: int):
    if not 1 <= level <= gm.num_levels:
        raise DomainError(f"level {level} outside [1, {gm.num_levels}]")


def extract_submodel(gm: GlobalModel, level: int) -> ParamSet:
    """Top-left sub-matrices (and leading bias entries) of the level region."""
    _check_level(gm, level)
    shapes = gm.shapes_at(level)
    weights = []
    biases = []
    for k, s in enumerate(shapes):
        weights.append(gm.params.weight(k)[: s.out_dim, : s.in_dim].copy())
        biases.append(gm.params.bias(k)[: s.out_dim].copy())
    return ParamSet.from_arrays(weights, biases)


def shell_masks(global_shapes, num_levels: int, shrink: float):
    """Boolean masks of the nested shells, innermost (level L) first.

    Returns a list of per-level lists of (weight_mask, bias_mask). Shell l
    is the level-l region minus the level-(l+1) region; together the shells
    partition the global index set whenever the level widths are distinct.
    """
    shapes = [s if isinstance(s, LayerShape) else LayerShape(*s) for s in global_shapes]
    regions = [level_shapes(shapes, lvl, shrink) for lvl in range(1, num_levels + 1)]

    def region_masks(lvl_shapes):
        masks = []
        for k, s in enumerate(shapes):
            wm = np.zeros((s.out_dim, s.in_dim), dtype=bool)
            wm[: lvl_shapes[k].out_dim, : lvl_shapes[k].in_dim] = True
            bm = np.zeros(s.out_dim, dtype=bool)
            bm[: lvl_shapes[k].out_dim] = True
            masks.append((wm, bm))
        return masks

    shells = []
    for lvl in range(num_levels, 0, -1):
        own = region_masks(regions[lvl - 1])
        if lvl == num_levels:
            shells.append(own)
        else:
            inner = region_masks(regions[lvl])
            shells.append(
                [(wm & ~iwm, bm & ~ibm) for (wm, bm), (iwm, ibm) in zip(own, inner)]
            )
    return shells


def aggregate(submodels, global_prev: GlobalModel) -> GlobalModel:
    """Cover-normalized weighted cell averaging of level-scoped sub-models.

    ``submodels`` is a list of (ParamSet, level, weight >= 0). Each cell of
    the new global model is the weight-normalized mean over the
    contributors covering it; uncovered cells keep their previous value.
    A covered cell whose covering weights sum to zero is an error.
    """
    gshapes = global_prev.params.shapes()
    acc_w = [np.zeros((s.out_dim, s.in_dim)) for s in gshapes]
    acc_b = [np.zeros(s.out_dim) for s in gshapes]
    wsum_w = [np.zeros((s.out_dim, s.in_dim)) for s in gshapes]
    wsum_b = [np.zeros(s.out_dim) for s in gshapes]
    cover_w = [np.zeros((s.out_dim, s.in_dim), dtype=bool) for s in gshapes]
    cover_b = [np.zeros(s.out_dim, dtype=bool) for s in gshapes]

    for params, level, weight in submodels:
        _check_level(global_prev, level)
        if weight < 0.0:
            raise DomainError(f"aggregation weight must be >= 0, got {weight}")
        region = global_prev.shapes_at(level)
        if params.shapes() != region:
            raise ShapeError(
                f"sub-model shapes {params.shapes()} do not match level {level} "
                f"region {region}"
            )
        for k, s in enumerate(region):
            acc_w[k][: s.out_dim, : s.in_dim] += weight * params.weight(k)
            acc_b[k][: s.out_dim] += weight * params.bias(k)
            wsum_w[k][: s.out_dim, : s.in_dim] += weight
            wsum_b[k][: s.out_dim] += weight
            cover_w[k][: s.out_dim, : s.in_dim] = True
            cover_b[k][: s.out_dim] = True

    weights_out = []
    biases_out = []
    for k, s in enumerate(gshapes):
        if np.any(cover_w[k] & (wsum_w[k] == 0.0)) or np.any(cover_b[k] & (wsum_b[k] == 0.0)):
            raise DegenerateWeightError(
                f"layer {k} has covered cells with zero total weight"
            )
        prev_w = global_prev.params.weight(k)
        prev_b = global_prev.params.bias(k)
        new_w = np.where(cover_w[k], acc_w[k] / np.where(wsum_w[k] == 0.0, 1.0, wsum_w[k]), prev_w)
        new_b = np.where(cover_b[k], acc_b[k] / np.where(wsum_b[k] == 0.0, 1.0, wsum_b[k]), prev_b)
        weights_out.append(new_w)
        biases_out.append(new_b)

    return GlobalModel(
        params=ParamSet.from_arrays(weights_out, biases_out),
        num_levels=global_prev.num_levels,
        shrink=global_prev.shrink,
    )


def _pca_cols(mat: np.ndarray, k: int) -> np.ndarray:
    """Project columns onto the top-k principal directions (uncentered, SVD).

    Directions beyond the rank lie in the null space, so their projected
    columns are exactly zero; the full basis is only computed when needed.
    """
    full = k > min(mat.shape)
    _, _, vt = np.linalg.svd(mat, full_matrices=full)
    return mat @ vt[:k].T


def _pca_rows(mat: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Project rows onto the top-k left singular directions; returns (proj, basis)."""
    full = k > min(mat.shape)
    u, _, _ = np.linalg.svd(mat, full_matrices=full)
    basis = u[:, :k]
    return basis.T @ mat, basis


def align_params(source: ParamSet, target_shapes) -> ParamSet:
    """Align a network onto target layer shapes via PCA compression / zero-padding.

    Per layer, columns (input side) are adjusted first, then rows (output
    side); the bias follows the row transform. Equal shapes pass through
    bit-identically, so alignment is idempotent on already-aligned inputs.
    """
    shapes = [s if isinstance(s, LayerShape) else LayerShape(*s) for s in target_shapes]
    if len(shapes) != source.n_layers:
        raise ShapeError(
            f"target has {len(shapes)} layers, source has {source.n_layers}"
        )
    weights = []
    biases = []
    for k, tgt in enumerate(shapes):
        w = source.weight(k)
        b = source.bias(k)
        out_s, in_s = w.shape
        if (out_s, in_s) == (tgt.out_dim, tgt.in_dim):
            weights.append(w.copy())
            biases.append(b.copy())
            continue
        if in_s > tgt.in_dim:
            w = _pca_cols(w, tgt.in_dim)
        elif in_s < tgt.in_dim:
            padded = np.zeros((out_s, tgt.in_dim))
            padded[:, :in_s] = w
            w = padded
        if out_s > tgt.out_dim:
            w, basis = _pca_rows(w, tgt.out_dim)
            b = basis.T @ b
        elif out_s < tgt.out_dim:
            padded = np.zeros((tgt.out_dim, w.shape[1]))
            padded[:out_s] = w
            w = padded
            pb = np.zeros(tgt.out_dim)
            pb[:out_s] = b
            b = pb
        weights.append(w)
        biases.append(b)
    return ParamSet.from_arrays(weights, biases)
