"""Pairwise agent similarity, knowledge graph, and selection weights.

Two signals feed the combined score for an ordered (target, source) pair:

* structural: cosine comparison of the flattened, dimension-aligned
  parameter vectors. ``cosine`` mode returns the plain cosine; the
  ``literal-eq8`` mode returns 1 - cosine, which is a *distance* (larger
  means less similar) and is kept only for fidelity experiments. When
  blending, cosine values are mapped to [0, 1] via (cos + 1) / 2 so that a
  larger combined score always means more related.
* semantic: the mean undiscounted return the target environment yields
  when actions are drawn from the source's aligned policy. Raw returns
  are min-max normalized across the candidate source set before blending,
  otherwise the blend coefficient loses meaning across environments with
  different reward scales.

The knowledge graph stores one directed edge per evaluated (target,
source) pair; selection keeps sources whose combined score clears the
threshold and weights them proportionally to the score.
"""

from __future__ import annotations


from dataclasses import dataclass

import numpy as np

from . import envs, kernels, nn
from .aggregation import align_params
from .errors import DegenerateInputError, DomainError, ShapeError

STRUCTURAL_MODES = ("cosine", "literal-eq8")
WEIGHT_MODES = ("renormalized", "literal")


@dataclass(frozen=True)
class SimilarityConfig:
    alpha: float = 0.5
    threshold: float = 0.75
    eval_episodes: int = 5
    structural_mode: str = "cosine"
    weight_mode: str = "renormalized"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise DomainError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.threshold < 0.0:
            raise DomainError(f"threshold must be >= 0, got {self.threshold}")
        if self.eval_episodes < 1:
            raise DomainError("eval_episodes must be >= 1")
        if self.structural_mode not in STRUCTURAL_MODES:
            raise DomainError(f"structural_mode must be one of {STRUCTURAL_MODES}")
        if self.weight_mode not in WEIGHT_MODES:
            raise DomainError(f"weight_mode must be one of {WEIGHT_MODES}")


@dataclass(frozen=True)
class KGEdge:
    src: int            # target agent (edge tail)
    dst: int            # source agent (edge head)
    structural: float   # blend input C (already mapped to the blend scale)
    score_raw: float    # raw mean return of the source policy on the target env
    score_norm: float   # min-max normalized over the candidate set
    combined: float     # alpha * C + (1 - alpha) * score_norm


@dataclass(frozen=True)
class KnowledgeGraph:
    agents: tuple
    edges: dict  # (src, dst) -> KGEdge

    def __post_init__(self):
        for (src, dst) in self.edges:
            if src == dst:
                raise DomainError("knowledge graph forbids self-edges")

    def edge(self, src: int, dst: int) -> KGEdge:
        return self.edges[(src, dst)]

    def out_edges(self, src: int) -> list:
        return [e for (s, _), e in sorted(self.edges.items()) if s == src]


@dataclass(frozen=True)
class SelectionWeights:
    target: int
    weights: dict   # source -> W >= 0 (zero exactly when below threshold)
    selected: tuple

    @property
    def empty(self) -> bool:
        """True when nobody cleared the threshold: the target trains solo."""
        return len(self.selected) == 0


def structural_similarity(a: nn.ParamSet, b: nn.ParamSet, mode: str = "cosine") -> float:
    """Cosine comparison of two equal-length flattened parameter vectors."""
    if mode not in STRUCTURAL_MODES:
        raise DomainError(f"structural_mode must be one of {STRUCTURAL_MODES}")
    va, vb = a.data, b.data
    if va.size != vb.size:
        raise ShapeError(
            f"flattened lengths differ ({va.size} vs {vb.size}); align first"
        )
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise DegenerateInputError("zero-norm parameter vector")
    cos = float(va @ vb) / (na * nb)
    return 1.0 - cos if mode == "literal-eq8" else cos


def run_episode(params: nn.ParamSet, spec: envs.EnvSpec, rng) -> float:
    """One full episode's undiscounted return under the given policy."""
    return float(kernels.episode_return(
        params.data, params.outs, params.ins,
        envs.env_kind(spec), rng, spec.max_steps,
    ))


def semantic_relatedness(target_env: envs.EnvSpec, source_params_aligned: nn.ParamSet,
                         episodes: int, rng) -> float:
    """Mean return of the target environment under the source's policy."""
    if episodes < 1:
        raise DomainError("episodes must be >= 1")
    return float(np.mean([run_episode(source_params_aligned, target_env, rng)
                          for _ in range(episodes)]))


def combined_similarity(structural: float, semantic_norm: float, alpha: float) -> float:
    """Affine blend of the two (already normalized) similarity signals."""
    if not 0.0 <= alpha <= 1.0:
        raise DomainError(f"alpha must lie in [0, 1], got {alpha}")
    return alpha * structural + (1.0 - alpha) * semantic_norm


def normalize_scores(raw) -> list:
    """Min-max to [0, 1] across the candidate set; all-equal maps to 0.5."""
    raw = [float(v) for v in raw]
    lo, hi = min(raw), max(raw)
    if hi == lo:
        return [0.5] * len(raw)
    return [(v - lo) / (hi - lo) for v in raw]


def _blend_structural(raw: float, mode: str) -> float:
    return (raw + 1.0) / 2.0 if mode == "cosine" else raw


def evaluate_target_row(target, sources, cfg: SimilarityConfig, rng) -> dict:
    """Evaluate every (target, source) edge for one target agent.

    ``target``/``sources`` are AgentProfiles. Source parameters are
    aligned to the target's own network shapes; per-source evaluation uses
    independently spawned RNG streams so the result does not depend on
    evaluation order. Returns {source_id: KGEdge}.
    """
    if not sources:
        return {}
    target_shapes = target.params.shapes()
    streams = rng.spawn(len(sources))
    structurals = []
    raws = []
    for src, stream in zip(sources, streams):
        aligned = align_params(src.params, target_shapes)
        c_raw = structural_similarity(target.params, aligned, cfg.structural_mode)
        structurals.append(_blend_structural(c_raw, cfg.structural_mode))
        raws.append(semantic_relatedness(target.env_spec, aligned,
                                         cfg.eval_episodes, stream))
    norms = normalize_scores(raws)
    edges = {}
    for src, c, s_raw, s_norm in zip(sources, structurals, raws, norms):
        mu = combined_similarity(c, s_norm, cfg.alpha)
        edges[src.agent_id] = KGEdge(
            src=target.agent_id, dst=src.agent_id,
            structural=c, score_raw=s_raw, score_norm=s_norm, combined=mu,
        )
    return edges


def build_knowledge_graph(profiles, cfg: SimilarityConfig, rng) -> KnowledgeGraph:
    """Full directed graph over >= 2 agents: one edge per ordered pair."""
    if len(profiles) < 2:
        raise DomainError("need at least 2 agents to build a knowledge graph")
    streams = rng.spawn(len(profiles))
    edges = {}
    for target, stream in zip(profiles, streams):
        sources = [p for p in profiles if p.agent_id != target.agent_id]
        row = evaluate_target_row(target, sources, cfg, stream)
        for dst, edge in row.items():
            edges[(target.agent_id, dst)] = edge
    return KnowledgeGraph(agents=tuple(p.agent_id for p in profiles), edges=edges)


def selection_weights(kg: KnowledgeGraph, target: int, threshold: float,
                      mode: str = "renormalized") -> SelectionWeights:
    """Threshold-gated, score-proportional source weights for one target.

    ``literal`` divides by the score sum over every candidate (including
    sub-threshold ones); ``renormalized`` divides over the selected set
    only, so selected weights sum to one. An empty selected set is the
    solo-training signal, not an error.
    """
    if mode not in WEIGHT_MODES:
        raise DomainError(f"weight mode must be one of {WEIGHT_MODES}")
    if target not in kg.agents:
        raise DomainError(f"target {target} not in knowledge graph")
    row = kg.out_edges(target)
    selected = tuple(e.dst for e in row if e.combined >= threshold)
    weights = {e.dst: 0.0 for e in row}
    if selected:
        if mode == "literal":
            denom = sum(e.combined for e in row)
        else:
            denom = sum(e.combined for e in row if e.dst in selected)
        if denom <= 0.0:
            raise DegenerateInputError("selected scores sum to zero")
        for e in row:
            if e.dst in selected:
                weights[e.dst] = e.combined / denom
    return SelectionWeights(target=target, weights=weights, selected=selected)


def kg_csv_lines(edges, selected) -> list:
    """Adjacency CSV lines (src,dst,C,S_raw,S_norm,mu,selected) for export."""
    lines = ["src,dst,C,S_raw,S_norm,mu,selected"]
    for e in sorted(edges, key=lambda e: (e.src, e.dst)):
        flag = "True" if e.dst in selected else "False"
        lines.append(
            f"{e.src},{e.dst},{e.structural!r},{e.score_raw!r},"
            f"{e.score_norm!r},{e.combined!r},{flag}"
        )
    return lines
