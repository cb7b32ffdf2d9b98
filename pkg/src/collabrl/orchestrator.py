"""Coordinator loop: local training, selection, wireless gating, aggregation.

One communication round for a target agent proceeds in order:

1. every agent trains locally for its configured episode budget and
   conceptually uploads its parameters;
2. the coordinator aligns each candidate source onto the target's network
   shapes and computes the structural score;
3. the target evaluates each aligned source policy on its own environment
   (the semantic score);
4. scores blend into the combined metric, the per-round knowledge-graph
   row is rebuilt, and sources clearing the threshold are selected with
   score-proportional weights;
5. resource blocks are allocated to the participants (selected sources
   plus the target) for one uplink and one downlink frame; anyone whose
   transmission misses the deadline in either direction is dropped;
6. the surviving sub-models (each at its own complexity level, aligned to
   the target's model family) are aggregated into the target's global
   model, and the target receives its level's extraction.

If nothing was selected, or every source (or the target itself) missed
the deadline, the round is "solo": the target simply keeps its locally
trained parameters and the global model is untouched.

Baselines reuse the same skeleton: ``homogeneous`` fixes the selection to
same-environment sources with uniform weights (steps 2-4 bypassed),
``random-select`` draws a uniformly random source subset of the same
cardinality the similarity rule would have picked, and ``noncoop`` never
communicates. All modes sharing a seed see identical initializations,
placements, and fading realizations.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import envs, nn, similarity, wireless
from .agent import AgentConfig, AgentProfile, local_train_round
from .aggregation import GlobalModel, aggregate, align_params, extract_submodel
from .config import MODES, ExperimentConfig
from .errors import DomainError
from .rng import (
    STREAM_ALLOC,
    STREAM_CHANNEL,
    STREAM_EVAL,
    STREAM_GLOBAL,
    STREAM_POSITIONS,
    STREAM_SELECT,
    STREAM_TRAIN,
    rng_for,
)

FINAL_WINDOW = 20  # rounds averaged into an experiment's "final" return


@dataclass(frozen=True)
class TerminationCriterion:
    loss_tolerance: float = 1e-3
    max_rounds: int = 500

    def __post_init__(self):
        if self.loss_tolerance <= 0.0:
            raise DomainError("loss_tolerance must be > 0")
        if self.max_rounds < 1:
            raise DomainError("max_rounds must be >= 1")


@dataclass
class AgentRoundRecord:
    agent_id: int
    episode_return: float
    loss: float
    selected: bool
    weight: float
    ul_delay: float = 0.0
    dl_delay: float = 0.0
    ul_rate: float = 0.0
    dl_rate: float = 0.0
    ul_rbs: int = 0
    dl_rbs: int = 0
    deadline_met: bool = True


@dataclass
class RoundLog:
    round_index: int
    target: int
    records: list
    global_loss: float
    solo: bool
    selected: tuple
    kg_edges: list | None = None


@dataclass
class ExperimentResult:
    mode: str
    seed: int
    sweep_value: object
    target: int
    rounds: list
    final_mean_return: dict

    @property
    def target_final_return(self) -> float:
        return self.final_mean_return[self.target]


def check_termination(loss_history, term: TerminationCriterion) -> bool:
    """True when training should stop after the latest entry."""
    m = len(loss_history)
    if m >= term.max_rounds:
        return True
    if m >= 2 and abs(loss_history[-1] - loss_history[-2]) < term.loss_tolerance:
        return True
    return False


def global_loss(losses: dict, weights: dict) -> float:
    """Weighted sum of per-agent local losses (the coordinator objective)."""
    return float(sum(w * losses[a] for a, w in weights.items()))


def family_shapes(env_spec: envs.EnvSpec, hidden) -> list:
    """Level-1 layer shapes of the model family for one environment."""
    dims = [env_spec.state_dim, *hidden, env_spec.action_count + 1]
    return [nn.LayerShape(dims[k], dims[k + 1]) for k in range(len(dims) - 1)]


def family_global(cfg: ExperimentConfig, env_spec: envs.EnvSpec, seed: int) -> GlobalModel:
    """The seeded level-1 global model of one environment's model family.

    Every agent of a family starts as an extraction of this model: local
    parameters are a nested subset of the global ones by construction,
    which is what makes cross-agent parameter averaging meaningful.
    """
    kind_index = envs.env_kind(env_spec)
    params = nn.init_params(
        family_shapes(env_spec, cfg.model.hidden),
        rng_for(seed, STREAM_GLOBAL, kind_index).integers(2**63),
    )
    return GlobalModel(params=params, num_levels=cfg.model.num_levels,
                       shrink=cfg.model.shrink)


def build_agents(cfg: ExperimentConfig, seed: int) -> list:
    """Instantiate all agent profiles from their families' global models."""
    agents = []
    acfg = AgentConfig(
        gamma=cfg.rl.gamma,
        rollout_len=cfg.rl.rollout_len,
        entropy_coef=cfg.rl.entropy_coef,
        value_coef=cfg.rl.value_coef,
        episodes_per_round=cfg.rl.episodes_per_round,
        normalize_advantages=cfg.rl.normalize_advantages,
        max_grad_norm=cfg.rl.max_grad_norm,
    )
    globals_by_kind = {}
    for i, env_name in enumerate(cfg.assignment):
        spec = envs.spec_for(env_name)
        if spec.kind not in globals_by_kind:
            globals_by_kind[spec.kind] = family_global(cfg, spec, seed)
        params = extract_submodel(globals_by_kind[spec.kind], cfg.levels[i])
        agents.append(
            AgentProfile(
                agent_id=i,
                env_spec=spec,
                level=cfg.levels[i],
                seed=seed,
                config=acfg,
                params=params,
                opt=nn.init_adam(params, lr=cfg.rl.lr),
            )
        )
    return agents


def _train_all(agents, seed, round_index, worker_threads):
    """Step 1: local training for every agent; parallel-safe per-agent streams."""

    def train(agent):
        rng = rng_for(seed, STREAM_TRAIN, agent.agent_id, round_index)
        _, mean_return, loss = local_train_round(agent, agent.config, rng)
        return agent.agent_id, mean_return, loss

    if worker_threads > 1:
        with ThreadPoolExecutor(max_workers=worker_threads) as pool:
            results = list(pool.map(train, agents))
    else:
        results = [train(agent) for agent in agents]
    returns = {a: r for a, r, _ in results}
    losses = {a: l for a, _, l in results}
    return returns, losses


def _select_sources(mode, cfg, agents, target, seed, round_index):
    """Steps 2-4: per-mode source membership and weights.

    Returns (members, weights, kg_edges); members is a sorted tuple of
    source ids, weights maps member -> W.
    """
    others = [a for a in agents if a.agent_id != target]
    if mode == "noncoop" or not others:
        return (), {}, None
    if mode == "homogeneous":
        same = [a.agent_id for a in others if a.env_spec.kind == agents[target].env_spec.kind]
        weights = {a: 1.0 / len(same) for a in same} if same else {}
        return tuple(sorted(same)), weights, None

    row = similarity.evaluate_target_row(
        agents[target], others, cfg.similarity, rng_for(seed, STREAM_EVAL, round_index)
    )
    kg = similarity.KnowledgeGraph(
        agents=tuple(a.agent_id for a in agents),
        edges={(e.src, e.dst): e for e in row.values()},
    )
    sel = similarity.selection_weights(kg, target, cfg.similarity.threshold,
                                       cfg.similarity.weight_mode)
    kg_edges = [row[k] for k in sorted(row)]
    if mode == "hfdrl":
        members = tuple(sorted(sel.selected))
        weights = {a: sel.weights[a] for a in members}
        return members, weights, kg_edges
    if mode == "random-select":
        k = len(sel.selected)
        if k == 0:
            return (), {}, kg_edges
        pool = sorted(a.agent_id for a in others)
        picked = rng_for(seed, STREAM_SELECT, round_index).choice(pool, size=k, replace=False)
        members = tuple(sorted(int(a) for a in picked))
        return members, {a: 1.0 / k for a in members}, kg_edges
    raise DomainError(f"unknown mode {mode!r}")


def _self_weight(model_cfg, source_weights) -> float:
    if model_cfg.self_weight == "max":
        return max(source_weights.values()) if source_weights else 1.0
    return float(model_cfg.self_weight)


def run_round(mode, cfg, agents, target, gm, seed, round_index, worker_threads=1):
    """One communication round; mutates agent profiles, returns (RoundLog, gm)."""
    returns, losses = _train_all(agents, seed, round_index, worker_threads)

    members, weights, kg_edges = _select_sources(mode, cfg, agents, target, seed, round_index)

    records = {
        a.agent_id: AgentRoundRecord(
            agent_id=a.agent_id,
            episode_return=returns[a.agent_id],
            loss=losses[a.agent_id],
            selected=a.agent_id in members,
            weight=weights.get(a.agent_id, 0.0),
        )
        for a in agents
    }

    solo = True
    surviving = ()
    if members:
        participants = tuple(sorted({*members, target}))
        positions = draw_cached_positions(cfg, seed)
        channel = wireless.sample_channel(cfg.wireless, positions,
                                          rng_for(seed, STREAM_CHANNEL, round_index))
        alloc = wireless.allocate_rbs(cfg.wireless, channel, participants, cfg.rb_policy,
                                      rng_for(seed, STREAM_ALLOC, round_index))
        for a in participants:
            rec = records[a]
            rec.ul_rate = wireless.link_rate(cfg.wireless, channel, alloc, a, "ul")
            rec.dl_rate = wireless.link_rate(cfg.wireless, channel, alloc, a, "dl")
            rec.ul_delay = wireless.tx_delay(cfg.wireless, rec.ul_rate)
            rec.dl_delay = wireless.tx_delay(cfg.wireless, rec.dl_rate)
            rec.ul_rbs = int(alloc.e_ul[a].sum())
            rec.dl_rbs = int(alloc.e_dl[a].sum())
            rec.deadline_met = alloc.feasible_ul[a] and alloc.feasible_dl[a]
        surviving = tuple(s for s in members if records[s].deadline_met)
        target_ok = records[target].deadline_met
        if surviving and target_ok:
            solo = False
            survivor_weights = {s: weights[s] for s in surviving}
            self_w = _self_weight(cfg.model, survivor_weights)
            contribs = [
                (
                    align_params(agents[s].params, gm.shapes_at(agents[s].level)),
                    agents[s].level,
                    survivor_weights[s],
                )
                for s in surviving
            ]
            contribs.append((agents[target].params, agents[target].level, self_w))
            gm = aggregate(contribs, gm)
            agents[target].params = extract_submodel(gm, agents[target].level)

    if solo:
        f_value = losses[target]
        records[target].selected = False
        records[target].weight = 0.0
    else:
        survivor_weights = {s: weights[s] for s in surviving}
        self_w = _self_weight(cfg.model, survivor_weights)
        total = self_w + sum(survivor_weights.values())
        f_weights = {s: w / total for s, w in survivor_weights.items()}
        f_weights[target] = self_w / total
        f_value = global_loss(losses, f_weights)
        records[target].selected = True
        records[target].weight = self_w

    log = RoundLog(
        round_index=round_index,
        target=target,
        records=[records[a.agent_id] for a in agents],
        global_loss=f_value,
        solo=solo,
        selected=members,
        kg_edges=kg_edges,
    )
    return log, gm


_POSITION_CACHE: dict = {}


def draw_cached_positions(cfg: ExperimentConfig, seed: int):
    """Agent placement is fixed for the whole experiment (per seed)."""
    key = (seed, cfg.n_agents, cfg.wireless.cell_radius_m)
    if key not in _POSITION_CACHE:
        _POSITION_CACHE[key] = wireless.draw_positions(
            cfg.wireless, cfg.n_agents, rng_for(seed, STREAM_POSITIONS)
        )
    return _POSITION_CACHE[key]


def run_experiment(cfg: ExperimentConfig, mode: str, seed: int, sweep_value=None,
                   worker_threads: int = 1) -> ExperimentResult:
    """Run one full experiment cell (mode, config, seed) to termination.

    With ``target_rotation = round-robin`` every agent takes the target
    role in turn (each family keeps its own coordinator global model);
    the fixed default trains ``cfg.target_index`` every round.
    """
    if mode not in MODES:
        raise DomainError(f"mode must be one of {MODES}, got {mode!r}")
    term = TerminationCriterion(loss_tolerance=cfg.loss_tolerance, max_rounds=cfg.max_rounds)
    agents = build_agents(cfg, seed)
    target = cfg.target_index
    rotate = cfg.target_rotation == "round-robin"

    # Each family's coordinator model starts at the family's common
    # initialization, so every agent's initial parameters are already a
    # nested subset of it.
    globals_by_kind = {}
    for a in agents:
        if a.env_spec.kind not in globals_by_kind:
            globals_by_kind[a.env_spec.kind] = family_global(cfg, a.env_spec, seed)

    logs = []
    f_history = []
    for m in range(1, term.max_rounds + 1):
        round_target = agents[(m - 1) % len(agents)].agent_id if rotate else target
        kind = agents[round_target].env_spec.kind
        log, globals_by_kind[kind] = run_round(
            mode, cfg, agents, round_target, globals_by_kind[kind], seed, m,
            worker_threads)
        logs.append(log)
        f_history.append(log.global_loss)
        if check_termination(f_history, term):
            break

    window = min(FINAL_WINDOW, len(logs))
    final = {
        a.agent_id: float(np.mean([lg.records[a.agent_id].episode_return
                                   for lg in logs[-window:]]))
        for a in agents
    }
    return ExperimentResult(
        mode=mode,
        seed=seed,
        sweep_value=sweep_value,
        target=target,
        rounds=logs,
        final_mean_return=final,
    )
