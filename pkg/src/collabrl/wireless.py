"""OFDMA uplink/downlink model: fading, rates, delays, RB allocation.

Rates follow the per-resource-block Shannon form

    c = B * sum_k e_k * log2(1 + p * (d/d_ref)^-eta * h_k / sigma^2)

with transmit power converted from dBm to linear milliwatts against the
unitless noise variance. The nominal parameter table mixes dBm powers with
sigma^2 = 1, which is not physically consistent at hundreds of meters, so
the distance-reference scale ``distance_ref_m`` (and sigma^2 itself) are
explicit configuration; with the default reference equal to the cell
radius the system operates in a feasible SNR regime while the formulas
stay exact.

Fading is a 10-tap model: per agent and direction a vector of complex
Gaussian taps with total unit average power; the gain on RB k is the
squared magnitude of the tap sum under a per-tap phase rotation
proportional to k, giving unit mean gain and correlated frequency
selectivity across RBs.

Allocation policies fill the binary assignment matrices under the
orthogonality constraints (every RB to at most one agent, total assigned
at most K). The greedy policy stands in for the unspecified convex
approximation: it repeatedly grants the highest-gain free RB to the
viable participant with the largest remaining delay deficit, until every
participant's transmission fits the deadline or RBs run out. Participants
whose deadline is unreachable even with every remaining RB yield priority
to reachable ones, so capacity is not wasted while someone could still be
saved; leftovers then flow to the largest remaining deficit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError

N_TAPS = 10

ALLOC_POLICIES = ("greedy", "uniform", "random")


@dataclass(frozen=True)
class WirelessConfig:
    rb_bandwidth_hz: float = 720e3
    rb_count_ul: int = 135
    rb_count_dl: int = 135
    bs_power_dbm: float = 56.0
    agent_power_dbm: float = 12.0
    path_loss_exp: float = 2.0
    noise_var: float = 1.0
    payload_bytes: float = 2000.0
    deadline_s: float = 0.8e-3
    cell_radius_m: float = 250.0
    distance_ref_m: float = 175.0
    log_base: str = "2"  # "2" for bits, "e" for nats

    def __post_init__(self):
        for name in ("rb_bandwidth_hz", "noise_var", "payload_bytes", "deadline_s",
                     "cell_radius_m", "distance_ref_m", "path_loss_exp"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        if self.rb_count_ul < 1 or self.rb_count_dl < 1:
            raise DomainError("RB counts must be >= 1")
        if self.log_base not in ("2", "e"):
            raise DomainError(f"log_base must be '2' or 'e', got {self.log_base!r}")

    def rb_count(self, direction: str) -> int:
        return self.rb_count_ul if direction == "ul" else self.rb_count_dl

    def power_mw(self, direction: str) -> float:
        dbm = self.agent_power_dbm if direction == "ul" else self.bs_power_dbm
        return 10.0 ** (dbm / 10.0)

    def required_rate(self) -> float:
        """Bits/s needed to move one payload strictly inside the deadline."""
        return 8.0 * self.payload_bytes / self.deadline_s


@dataclass(frozen=True)
class ChannelRealization:
    """Per-(agent, RB, direction) power gains and agent distances for one frame."""

    gains_ul: np.ndarray  # (N, K_ul)
    gains_dl: np.ndarray  # (N, K_dl)
    distances: np.ndarray  # (N,)

    def gains(self, direction: str) -> np.ndarray:
        return self.gains_ul if direction == "ul" else self.gains_dl


@dataclass(frozen=True)
class RBAllocation:
    """Binary assignment matrices for one frame plus per-agent deadline flags."""

    e_ul: np.ndarray  # (N, K_ul) int8
    e_dl: np.ndarray  # (N, K_dl) int8
    participants: tuple
    feasible_ul: dict
    feasible_dl: dict

    def matrix(self, direction: str) -> np.ndarray:
        return self.e_ul if direction == "ul" else self.e_dl


def _check_direction(direction: str):
    if direction not in ("ul", "dl"):
        raise DomainError(f"direction must be 'ul' or 'dl', got {direction!r}")


def draw_positions(cfg: WirelessConfig, n_agents: int, rng) -> np.ndarray:
    """Uniform positions over the coverage disk, BS at the origin; (N, 2)."""
    r = cfg.cell_radius_m * np.sqrt(rng.random(n_agents))
    phi = 2.0 * math.pi * rng.random(n_agents)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def _tap_gains(rng, n_agents: int, n_rbs: int) -> np.ndarray:
    """Squared magnitude of the 10-tap frequency response on each RB."""
    scale = math.sqrt(1.0 / (2.0 * N_TAPS))
    taps = scale * (
        rng.standard_normal((n_agents, N_TAPS)) + 1j * rng.standard_normal((n_agents, N_TAPS))
    )
    k = np.arange(n_rbs)
    t = np.arange(N_TAPS)
    phases = np.exp(-2j * math.pi * np.outer(k, t) / n_rbs)
    freq = taps @ phases.T
    return np.abs(freq) ** 2


def sample_channel(cfg: WirelessConfig, positions, rng) -> ChannelRealization:
    """Draw one frame's fading realization for every agent and direction."""
    pos = np.asarray(positions, dtype=np.float64)
    d = np.sqrt((pos**2).sum(axis=1))
    if np.any(d <= 0.0) or np.any(d > cfg.cell_radius_m):
        raise DomainError("agent distances must lie in (0, cell_radius]")
    n = len(d)
    gains_ul = _tap_gains(rng, n, cfg.rb_count_ul)
    gains_dl = _tap_gains(rng, n, cfg.rb_count_dl)
    return ChannelRealization(gains_ul=gains_ul, gains_dl=gains_dl, distances=d)


def _log_fn(cfg: WirelessConfig):
    return np.log2 if cfg.log_base == "2" else np.log


def rb_rates(cfg: WirelessConfig, channel: ChannelRealization, agent: int,
             direction: str) -> np.ndarray:
    """Achievable rate of every RB for one agent and direction (bits/s each)."""
    _check_direction(direction)
    snr = (
        cfg.power_mw(direction)
        * (channel.distances[agent] / cfg.distance_ref_m) ** (-cfg.path_loss_exp)
        * channel.gains(direction)[agent]
        / cfg.noise_var
    )
    return cfg.rb_bandwidth_hz * _log_fn(cfg)(1.0 + snr)


def link_rate(cfg: WirelessConfig, channel: ChannelRealization, alloc: RBAllocation,
              agent: int, direction: str) -> float:
    """Total frame rate of an agent under an allocation (bits/s)."""
    _check_direction(direction)
    e = alloc.matrix(direction)[agent]
    return float((e * rb_rates(cfg, channel, agent, direction)).sum())


def tx_delay(cfg: WirelessConfig, rate_bps: float) -> float:
    """Over-the-air delay of one payload; infinite when the rate is zero."""
    if rate_bps <= 0.0:
        return math.inf
    return 8.0 * cfg.payload_bytes / rate_bps


def feasibility_check(cfg: WirelessConfig, channel: ChannelRealization,
                      alloc: RBAllocation, agent: int) -> tuple[bool, bool]:
    """(uplink met, downlink met): delay strictly below the deadline."""
    met = []
    for direction in ("ul", "dl"):
        delay = tx_delay(cfg, link_rate(cfg, channel, alloc, agent, direction))
        met.append(delay < cfg.deadline_s)
    return met[0], met[1]


def _allocate_direction(rate_table: np.ndarray, needed_rate: float, policy: str, rng):
    """Assignment (P, K) int8 for one direction given per-RB rates per participant."""
    n_part, n_rbs = rate_table.shape
    assign = np.zeros((n_part, n_rbs), dtype=np.int8)
    if n_part == 0:
        return assign
    if policy == "uniform":
        share = n_rbs // n_part
        for p in range(n_part):
            assign[p, p * share : (p + 1) * share] = 1
        return assign
    if policy == "random":
        owners = rng.integers(0, n_part, size=n_rbs)
        assign[owners, np.arange(n_rbs)] = 1
        return assign
    if policy != "greedy":
        raise DomainError(f"unknown RB policy {policy!r}")
    free = np.ones(n_rbs, dtype=bool)
    achieved = np.zeros(n_part)
    # Remaining capacity per agent over the still-free RBs. Participants
    # whose deadline is reachable with what is left take priority, so RBs
    # are not wasted on hopeless agents while others could still be saved;
    # once nobody reachable remains, leftovers go to the largest deficit.
    reach = rate_table.sum(axis=1)
    while free.any():
        deficits = needed_rate - achieved
        viable = deficits >= 0.0
        if not viable.any():
            break
        reachable = viable & (reach > deficits)
        pool = reachable if reachable.any() else viable
        p = int(np.argmax(np.where(pool, deficits, -np.inf)))
        row = np.where(free, rate_table[p], -1.0)
        k = int(np.argmax(row))
        assign[p, k] = 1
        achieved[p] += rate_table[p, k]
        free[k] = False
        reach -= rate_table[:, k]
    return assign


def allocate_rbs(cfg: WirelessConfig, channel: ChannelRealization, participants,
                 policy: str, rng) -> RBAllocation:
    """Fill both directions' assignment matrices for the given participants.

    All policies satisfy orthogonality exactly (each RB to at most one
    agent, total at most K per direction). Deadline infeasibility is
    reported through the per-agent flags, never raised.
    """
    participants = tuple(int(a) for a in participants)
    n = channel.gains_ul.shape[0]
    for a in participants:
        if not 0 <= a < n:
            raise DomainError(f"participant {a} outside channel realization")
    needed = cfg.required_rate()
    mats = {}
    for direction in ("ul", "dl"):
        k = cfg.rb_count(direction)
        table = np.array([rb_rates(cfg, channel, a, direction) for a in participants])
        table = table.reshape(len(participants), k)
        sub = _allocate_direction(table, needed, policy, rng)
        full = np.zeros((n, k), dtype=np.int8)
        for row, a in enumerate(participants):
            full[a] = sub[row]
        mats[direction] = full
    alloc = RBAllocation(
        e_ul=mats["ul"],
        e_dl=mats["dl"],
        participants=participants,
        feasible_ul={},
        feasible_dl={},
    )
    for a in participants:
        ul_ok, dl_ok = feasibility_check(cfg, channel, alloc, a)
        alloc.feasible_ul[a] = ul_ok
        alloc.feasible_dl[a] = dl_ok
    return alloc
