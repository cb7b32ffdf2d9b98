"""Experiment configuration: typed defaults, text parsing, and emission.

The config format is flat sectioned ``key = value`` text (see README for
the grammar). Unknown sections or keys are rejected; missing keys fall
back to the documented defaults, which reproduce the reference setup:
ten agents (five per environment), the target on the second task, and the
nominal wireless parameter table. ``config_text`` emits the canonical
form, and ``parse_config(config_text(cfg)) == cfg`` holds for any valid
config.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .errors import ConfigError
from .similarity import STRUCTURAL_MODES, WEIGHT_MODES, SimilarityConfig
from .wireless import ALLOC_POLICIES, WirelessConfig

MODES = ("hfdrl", "homogeneous", "random-select", "noncoop")
SWEEP_NAMES = ("rb_count", "alpha", "lambda")
ENV_NAMES = ("cartpole", "acrobot")


@dataclass(frozen=True)
class ModelConfig:
    hidden: tuple = (128, 128)
    num_levels: int = 2
    shrink: float = 0.5
    self_weight: object = 1.0  # "max" or a non-negative float


@dataclass(frozen=True)
class RLConfig:
    gamma: float = 0.95
    lr: float = 3e-4
    rollout_len: int = 8
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    episodes_per_round: int = 1
    normalize_advantages: bool = True
    max_grad_norm: float = 0.5


@dataclass(frozen=True)
class ExperimentConfig:
    n_agents: int = 10
    assignment: tuple = ("cartpole",) * 5 + ("acrobot",) * 5
    target_index: int = 5
    levels: tuple = (1, 2, 1, 2, 1, 1, 2, 1, 2, 1)
    model: ModelConfig = field(default_factory=ModelConfig)
    rl: RLConfig = field(default_factory=RLConfig)
    similarity: SimilarityConfig = field(default_factory=SimilarityConfig)
    wireless: WirelessConfig = field(default_factory=WirelessConfig)
    modes: tuple = MODES
    rb_policy: str = "greedy"
    seeds: tuple = (1, 2, 3, 4, 5)
    max_rounds: int = 500
    loss_tolerance: float = 1e-3
    workers: int = 1
    kg_export: bool = True


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


@dataclass(frozen=True)
class SweepSpec:
    name: str
    values: tuple
    repetitions: int = 1

    def __post_init__(self):
        if self.name not in SWEEP_NAMES:
            raise ConfigError(f"sweep name must be one of {SWEEP_NAMES}, got {self.name!r}")
        if len(self.values) == 0:
            raise ConfigError("sweep needs a non-empty value list")
        if self.repetitions < 1:
            raise ConfigError("sweep repetitions must be >= 1")


def apply_sweep_value(cfg: ExperimentConfig, name: str, value) -> ExperimentConfig:
    """Return a config with one swept parameter replaced."""
    if name == "rb_count":
        k = int(value)
        if k < 1:
            raise ConfigError("rb_count values must be >= 1")
        return replace(cfg, wireless=replace(cfg.wireless, rb_count_ul=k, rb_count_dl=k))
    if name == "alpha":
        return replace(cfg, similarity=replace(cfg.similarity, alpha=float(value)))
    if name == "lambda":
        return replace(cfg, similarity=replace(cfg.similarity, threshold=float(value)))
    raise ConfigError(f"sweep name must be one of {SWEEP_NAMES}, got {name!r}")


# --- text format -----------------------------------------------------------

def _parse_sections(text: str) -> dict:
    sections: dict = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            sections.setdefault(current, {})
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: empty key")
        if key in sections[current]:
            raise ConfigError(f"line {lineno}: duplicate key {current}.{key}")
        sections[current][key] = value
    return sections


def _as_int(name, raw, lo=None, hi=None):
    try:
        v = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if lo is not None and v < lo:
        raise ConfigError(f"{name} must be >= {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{name} must be <= {hi}, got {v}")
    return v


def _as_float(name, raw, lo=None, hi=None, lo_open=False):
    try:
        v = float(raw)
    except ValueError:
        raise ConfigError(f"{name} must be a number, got {raw!r}") from None
    if lo is not None and (v <= lo if lo_open else v < lo):
        op = ">" if lo_open else ">="
        raise ConfigError(f"{name} must be {op} {lo}, got {v}")
    if hi is not None and v > hi:
        raise ConfigError(f"{name} must be <= {hi}, got {v}")
    return v


def _as_choice(name, raw, choices):
    if raw not in choices:
        raise ConfigError(f"{name} must be one of {choices}, got {raw!r}")
    return raw


def _as_bool(name, raw):
    low = raw.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ConfigError(f"{name} must be true or false, got {raw!r}")


def _as_int_list(name, raw, lo=None):
    return tuple(_as_int(name, part.strip(), lo=lo) for part in raw.split(",") if part.strip())


def _parse_assignment(raw: str) -> tuple:
    agents = []
    for part in raw.split(","):
        part = part.strip()
        if not part:
            continue
        if ":" not in part:
            raise ConfigError(
                f"agents.assignment entries must look like 'env:count', got {part!r}"
            )
        env, count = part.split(":", 1)
        env = env.strip()
        if env not in ENV_NAMES:
            raise ConfigError(f"agents.assignment env must be one of {ENV_NAMES}, got {env!r}")
        agents.extend([env] * _as_int("agents.assignment count", count.strip(), lo=1))
    if not agents:
        raise ConfigError("agents.assignment is empty")
    return tuple(agents)


def _auto_levels(assignment, num_levels) -> tuple:
    """Cycle complexity levels 1..L within each environment group."""
    levels = []
    counters: dict = {}
    for env in assignment:
        idx = counters.get(env, 0)
        levels.append(1 + idx % num_levels)
        counters[env] = idx + 1
    return tuple(levels)


_KNOWN_KEYS = {
    "agents": ("count", "assignment", "target_index", "levels"),
    "model": ("hidden", "levels", "shrink", "self_weight"),
    "rl": ("gamma", "lr", "rollout_len", "entropy_coef", "value_coef",
           "episodes_per_round", "normalize_advantages", "max_grad_norm"),
    "similarity": ("alpha", "lambda", "eval_episodes", "structural_mode", "weight_mode"),
    "wireless": (
        "rb_bandwidth_hz", "rb_count_ul", "rb_count_dl", "bs_power_dbm",
        "agent_power_dbm", "path_loss_exp", "noise_var", "payload_bytes",
        "deadline_s", "cell_radius_m", "distance_ref_m", "log_base",
    ),
    "run": (
        "modes", "rb_policy", "seeds", "max_rounds", "loss_tolerance",
        "workers", "kg_export",
    ),
}


def parse_config(text: str) -> ExperimentConfig:
    """Parse sectioned key=value text; unknown keys are rejected."""
    sections = _parse_sections(text)
    for sec, keys in sections.items():
        if sec not in _KNOWN_KEYS:
            raise ConfigError(f"unknown section [{sec}]")
        for key in keys:
            if key not in _KNOWN_KEYS[sec]:
                raise ConfigError(f"unknown key {sec}.{key}")

    def get(sec, key, default=None):
        return sections.get(sec, {}).get(key, default)

    dft = ExperimentConfig()

    hidden = dft.model.hidden
    if get("model", "hidden") is not None:
        hidden = _as_int_list("model.hidden", get("model", "hidden"), lo=1)
        if not hidden:
            raise ConfigError("model.hidden needs at least one width")
    num_levels = _as_int("model.levels", get("model", "levels", str(dft.model.num_levels)), lo=1)
    shrink = _as_float("model.shrink", get("model", "shrink", repr(dft.model.shrink)),
                       lo=0.0, lo_open=True, hi=1.0)
    default_self = dft.model.self_weight
    raw_self = get("model", "self_weight",
                   default_self if default_self == "max" else repr(default_self))
    self_weight: object = "max"
    if raw_self != "max":
        self_weight = _as_float("model.self_weight", raw_self, lo=0.0)
    model = ModelConfig(hidden=hidden, num_levels=num_levels, shrink=shrink,
                        self_weight=self_weight)

    assignment = dft.assignment
    if get("agents", "assignment") is not None:
        assignment = _parse_assignment(get("agents", "assignment"))
    n_agents = _as_int("agents.count", get("agents", "count", str(len(assignment))), lo=1)
    if n_agents != len(assignment):
        raise ConfigError(
            f"agents.count is {n_agents} but agents.assignment lists {len(assignment)}"
        )
    # Default target: the first agent on the second task, else agent 0.
    default_target = assignment.index("acrobot") if "acrobot" in assignment else 0
    target_index = _as_int("agents.target_index",
                           get("agents", "target_index", str(default_target)),
                           lo=0, hi=n_agents - 1)
    raw_levels = get("agents", "levels", "auto")
    if raw_levels == "auto":
        levels = _auto_levels(assignment, num_levels)
    else:
        levels = _as_int_list("agents.levels", raw_levels, lo=1)
        if len(levels) != n_agents:
            raise ConfigError(f"agents.levels lists {len(levels)} entries for {n_agents} agents")
        for lvl in levels:
            if lvl > num_levels:
                raise ConfigError(f"agents.levels entry {lvl} exceeds model.levels {num_levels}")

    rl = RLConfig(
        gamma=_as_float("rl.gamma", get("rl", "gamma", repr(dft.rl.gamma)),
                        lo=0.0, lo_open=True, hi=1.0),
        lr=_as_float("rl.lr", get("rl", "lr", repr(dft.rl.lr)), lo=0.0),
        rollout_len=_as_int("rl.rollout_len",
                            get("rl", "rollout_len", str(dft.rl.rollout_len)), lo=1),
        entropy_coef=_as_float("rl.entropy_coef", get("rl", "entropy_coef",
                                                      repr(dft.rl.entropy_coef)), lo=0.0),
        value_coef=_as_float("rl.value_coef", get("rl", "value_coef",
                                                  repr(dft.rl.value_coef)), lo=0.0),
        episodes_per_round=_as_int("rl.episodes_per_round",
                                   get("rl", "episodes_per_round",
                                       str(dft.rl.episodes_per_round)), lo=1),
        normalize_advantages=_as_bool("rl.normalize_advantages",
                                      get("rl", "normalize_advantages",
                                          "true" if dft.rl.normalize_advantages else "false")),
        max_grad_norm=_as_float("rl.max_grad_norm",
                                get("rl", "max_grad_norm", repr(dft.rl.max_grad_norm)),
                                lo=0.0, lo_open=True),
    )
    if rl.gamma >= 1.0:
        raise ConfigError(f"rl.gamma must be < 1, got {rl.gamma}")

    sim = SimilarityConfig(
        alpha=_as_float("similarity.alpha", get("similarity", "alpha",
                                                repr(dft.similarity.alpha)), lo=0.0, hi=1.0),
        threshold=_as_float("similarity.lambda", get("similarity", "lambda",
                                                     repr(dft.similarity.threshold)), lo=0.0),
        eval_episodes=_as_int("similarity.eval_episodes",
                              get("similarity", "eval_episodes",
                                  str(dft.similarity.eval_episodes)), lo=1),
        structural_mode=_as_choice("similarity.structural_mode",
                                   get("similarity", "structural_mode",
                                       dft.similarity.structural_mode), STRUCTURAL_MODES),
        weight_mode=_as_choice("similarity.weight_mode",
                               get("similarity", "weight_mode",
                                   dft.similarity.weight_mode), WEIGHT_MODES),
    )

    w = dft.wireless
    wireless = WirelessConfig(
        rb_bandwidth_hz=_as_float("wireless.rb_bandwidth_hz",
                                  get("wireless", "rb_bandwidth_hz", repr(w.rb_bandwidth_hz)),
                                  lo=0.0, lo_open=True),
        rb_count_ul=_as_int("wireless.rb_count_ul",
                            get("wireless", "rb_count_ul", str(w.rb_count_ul)), lo=1),
        rb_count_dl=_as_int("wireless.rb_count_dl",
                            get("wireless", "rb_count_dl", str(w.rb_count_dl)), lo=1),
        bs_power_dbm=_as_float("wireless.bs_power_dbm",
                               get("wireless", "bs_power_dbm", repr(w.bs_power_dbm))),
        agent_power_dbm=_as_float("wireless.agent_power_dbm",
                                  get("wireless", "agent_power_dbm", repr(w.agent_power_dbm))),
        path_loss_exp=_as_float("wireless.path_loss_exp",
                                get("wireless", "path_loss_exp", repr(w.path_loss_exp)),
                                lo=0.0, lo_open=True),
        noise_var=_as_float("wireless.noise_var",
                            get("wireless", "noise_var", repr(w.noise_var)),
                            lo=0.0, lo_open=True),
        payload_bytes=_as_float("wireless.payload_bytes",
                                get("wireless", "payload_bytes", repr(w.payload_bytes)),
                                lo=0.0, lo_open=True),
        deadline_s=_as_float("wireless.deadline_s",
                             get("wireless", "deadline_s", repr(w.deadline_s)),
                             lo=0.0, lo_open=True),
        cell_radius_m=_as_float("wireless.cell_radius_m",
                                get("wireless", "cell_radius_m", repr(w.cell_radius_m)),
                                lo=0.0, lo_open=True),
        distance_ref_m=_as_float("wireless.distance_ref_m",
                                 get("wireless", "distance_ref_m", repr(w.distance_ref_m)),
                                 lo=0.0, lo_open=True),
        log_base=_as_choice("wireless.log_base",
                            get("wireless", "log_base", w.log_base), ("2", "e")),
    )

    raw_modes = get("run", "modes")
    if raw_modes is None:
        modes = dft.modes
    else:
        modes = tuple(m.strip() for m in raw_modes.split(",") if m.strip())
        for m in modes:
            if m not in MODES:
                raise ConfigError(f"run.modes entries must be in {MODES}, got {m!r}")
        if not modes:
            raise ConfigError("run.modes is empty")

    seeds = dft.seeds
    if get("run", "seeds") is not None:
        seeds = _as_int_list("run.seeds", get("run", "seeds"), lo=0)
        if not seeds:
            raise ConfigError("run.seeds is empty")

    return ExperimentConfig(
        n_agents=n_agents,
        assignment=assignment,
        target_index=target_index,
        levels=levels,
        model=model,
        rl=rl,
        similarity=sim,
        wireless=wireless,
        modes=modes,
        rb_policy=_as_choice("run.rb_policy", get("run", "rb_policy", dft.rb_policy),
                             ALLOC_POLICIES),
        seeds=seeds,
        max_rounds=_as_int("run.max_rounds", get("run", "max_rounds", str(dft.max_rounds)), lo=1),
        loss_tolerance=_as_float("run.loss_tolerance",
                                 get("run", "loss_tolerance", repr(dft.loss_tolerance)),
                                 lo=0.0, lo_open=True),
        workers=_as_int("run.workers", get("run", "workers", str(dft.workers)), lo=1),
        kg_export=_as_bool("run.kg_export", get("run", "kg_export",
                                                "true" if dft.kg_export else "false")),
    )


def _assignment_text(assignment) -> str:
    parts = []
    for env in assignment:
        if parts and parts[-1][0] == env:
            parts[-1][1] += 1
        else:
            parts.append([env, 1])
    return ",".join(f"{env}:{count}" for env, count in parts)


def config_text(cfg: ExperimentConfig) -> str:
    """Canonical text form; parse_config round-trips it exactly."""
    sw = cfg.model.self_weight
    lines = [
        "[agents]",
        f"count = {cfg.n_agents}",
        f"assignment = {_assignment_text(cfg.assignment)}",
        f"target_index = {cfg.target_index}",
        f"levels = {','.join(str(v) for v in cfg.levels)}",
        "",
        "[model]",
        f"hidden = {','.join(str(v) for v in cfg.model.hidden)}",
        f"levels = {cfg.model.num_levels}",
        f"shrink = {cfg.model.shrink!r}",
        f"self_weight = {sw if sw == 'max' else repr(sw)}",
        "",
        "[rl]",
        f"gamma = {cfg.rl.gamma!r}",
        f"lr = {cfg.rl.lr!r}",
        f"rollout_len = {cfg.rl.rollout_len}",
        f"entropy_coef = {cfg.rl.entropy_coef!r}",
        f"value_coef = {cfg.rl.value_coef!r}",
        f"episodes_per_round = {cfg.rl.episodes_per_round}",
        f"normalize_advantages = {'true' if cfg.rl.normalize_advantages else 'false'}",
        f"max_grad_norm = {cfg.rl.max_grad_norm!r}",
        "",
        "[similarity]",
        f"alpha = {cfg.similarity.alpha!r}",
        f"lambda = {cfg.similarity.threshold!r}",
        f"eval_episodes = {cfg.similarity.eval_episodes}",
        f"structural_mode = {cfg.similarity.structural_mode}",
        f"weight_mode = {cfg.similarity.weight_mode}",
        "",
        "[wireless]",
        f"rb_bandwidth_hz = {cfg.wireless.rb_bandwidth_hz!r}",
        f"rb_count_ul = {cfg.wireless.rb_count_ul}",
        f"rb_count_dl = {cfg.wireless.rb_count_dl}",
        f"bs_power_dbm = {cfg.wireless.bs_power_dbm!r}",
        f"agent_power_dbm = {cfg.wireless.agent_power_dbm!r}",
        f"path_loss_exp = {cfg.wireless.path_loss_exp!r}",
        f"noise_var = {cfg.wireless.noise_var!r}",
        f"payload_bytes = {cfg.wireless.payload_bytes!r}",
        f"deadline_s = {cfg.wireless.deadline_s!r}",
        f"cell_radius_m = {cfg.wireless.cell_radius_m!r}",
        f"distance_ref_m = {cfg.wireless.distance_ref_m!r}",
        f"log_base = {cfg.wireless.log_base}",
        "",
        "[run]",
        f"modes = {','.join(cfg.modes)}",
        f"rb_policy = {cfg.rb_policy}",
        f"seeds = {','.join(str(s) for s in cfg.seeds)}",
        f"max_rounds = {cfg.max_rounds}",
        f"loss_tolerance = {cfg.loss_tolerance!r}",
        f"workers = {cfg.workers}",
        f"kg_export = {'true' if cfg.kg_export else 'false'}",
        "",
    ]
    return "\n".join(lines)
