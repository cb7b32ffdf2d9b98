"""Channel statistics, rate/delay formulas, and RB allocation constraints."""

import math

import numpy as np
import pytest

from collabrl.errors import DomainError
from collabrl.wireless import (
    ALLOC_POLICIES,
    ChannelRealization,
    RBAllocation,
    WirelessConfig,
    _allocate_direction,
    allocate_rbs,
    draw_positions,
    feasibility_check,
    link_rate,
    rb_rates,
    sample_channel,
    tx_delay,
)


def small_cfg(**kw):
    defaults = dict(rb_count_ul=6, rb_count_dl=6)
    defaults.update(kw)
    return WirelessConfig(**defaults)


def manual_channel(gains_ul, gains_dl, distances):
    return ChannelRealization(
        gains_ul=np.asarray(gains_ul, dtype=np.float64),
        gains_dl=np.asarray(gains_dl, dtype=np.float64),
        distances=np.asarray(distances, dtype=np.float64),
    )


def manual_alloc(e_ul, e_dl):
    return RBAllocation(
        e_ul=np.asarray(e_ul, dtype=np.int8),
        e_dl=np.asarray(e_dl, dtype=np.int8),
        participants=tuple(range(np.asarray(e_ul).shape[0])),
        feasible_ul={},
        feasible_dl={},
    )


def exhaustive_best_count(table, needed):
    """Max number of deadline-met agents over every binary assignment."""
    n_part, n_rbs = table.shape
    codes = np.arange((n_part + 1) ** n_rbs)
    rates = np.zeros((len(codes), n_part))
    c = codes.copy()
    for k in range(n_rbs):
        owner = c % (n_part + 1)
        c //= n_part + 1
        for a in range(n_part):
            rates[owner == a, a] += table[a, k]
    return int((rates > needed).sum(axis=1).max())


class TestChannel:
    def test_positions_inside_disk(self):
        cfg = WirelessConfig()
        pos = draw_positions(cfg, 500, np.random.default_rng(0))
        d = np.sqrt((pos**2).sum(axis=1))
        assert np.all(d > 0) and np.all(d <= cfg.cell_radius_m)

    def test_seeded_realization_reproducible(self):
        cfg = small_cfg()
        pos = draw_positions(cfg, 4, np.random.default_rng(1))
        a = sample_channel(cfg, pos, np.random.default_rng(2))
        b = sample_channel(cfg, pos, np.random.default_rng(2))
        assert np.array_equal(a.gains_ul, b.gains_ul)
        assert np.array_equal(a.gains_dl, b.gains_dl)

    def test_gains_nonnegative(self):
        cfg = small_cfg()
        pos = draw_positions(cfg, 10, np.random.default_rng(3))
        ch = sample_channel(cfg, pos, np.random.default_rng(4))
        assert np.all(ch.gains_ul >= 0.0) and np.all(ch.gains_dl >= 0.0)

    def test_mean_gain_is_unit(self):
        # 10-tap unit-power fading: empirical mean gain within [0.97, 1.03]
        # over 1e5 samples.
        cfg = WirelessConfig(rb_count_ul=100, rb_count_dl=1)
        rng = np.random.default_rng(5)
        pos = draw_positions(cfg, 100, rng)
        total, count = 0.0, 0
        for _ in range(10):
            ch = sample_channel(cfg, pos, rng)
            total += ch.gains_ul.sum()
            count += ch.gains_ul.size
        assert count == 100_000
        assert 0.97 <= total / count <= 1.03


class TestLinkRate:
    def test_no_rbs_gives_zero_rate(self):
        cfg = small_cfg()
        ch = manual_channel(np.ones((1, 6)), np.ones((1, 6)), [100.0])
        alloc = manual_alloc(np.zeros((1, 6)), np.zeros((1, 6)))
        assert link_rate(cfg, ch, alloc, 0, "ul") == 0.0

    def test_exact_snr_seven_rate(self):
        # SNR term == 7 on a single RB: rate = B * log2(8) = 2.16 Mb/s exact.
        cfg = WirelessConfig(rb_count_ul=1, rb_count_dl=1, agent_power_dbm=0.0,
                             distance_ref_m=100.0, noise_var=1.0)
        ch = manual_channel([[7.0]], [[7.0]], [100.0])
        alloc = manual_alloc([[1]], [[1]])
        assert link_rate(cfg, ch, alloc, 0, "ul") == pytest.approx(2.16e6, rel=1e-12)

    def test_matches_per_rb_summation_oracle(self):
        rng = np.random.default_rng(6)
        for _ in range(100):
            cfg = small_cfg(agent_power_dbm=float(rng.uniform(-10, 20)),
                            bs_power_dbm=float(rng.uniform(0, 50)),
                            path_loss_exp=float(rng.uniform(1.5, 4.0)),
                            noise_var=float(rng.uniform(0.5, 2.0)))
            n = int(rng.integers(1, 5))
            pos = draw_positions(cfg, n, rng)
            ch = sample_channel(cfg, pos, rng)
            e_ul = rng.integers(0, 2, size=(n, 6))
            e_dl = rng.integers(0, 2, size=(n, 6))
            alloc = manual_alloc(e_ul, e_dl)
            agent = int(rng.integers(n))
            for direction, e, p_dbm, k in (("ul", e_ul, cfg.agent_power_dbm, 6),
                                           ("dl", e_dl, cfg.bs_power_dbm, 6)):
                expect = 0.0
                for rb in range(k):
                    if e[agent, rb]:
                        snr = (10 ** (p_dbm / 10.0)
                               * (ch.distances[agent] / cfg.distance_ref_m) ** (-cfg.path_loss_exp)
                               * ch.gains(direction)[agent, rb] / cfg.noise_var)
                        expect += cfg.rb_bandwidth_hz * math.log2(1.0 + snr)
                got = link_rate(cfg, ch, alloc, agent, direction)
                assert got == pytest.approx(expect, rel=1e-9, abs=1e-6)

    def test_monotone_in_rb_set_and_power(self):
        rng = np.random.default_rng(7)
        cfg = small_cfg()
        pos = draw_positions(cfg, 1, rng)
        ch = sample_channel(cfg, pos, rng)
        e = np.zeros((1, 6), dtype=np.int8)
        prev = 0.0
        for k in range(6):
            e[0, k] = 1
            rate = link_rate(cfg, ch, manual_alloc(e, e), 0, "ul")
            assert rate >= prev
            prev = rate
        hot = small_cfg(agent_power_dbm=cfg.agent_power_dbm + 3.0)
        assert link_rate(hot, ch, manual_alloc(e, e), 0, "ul") >= prev

    def test_natural_log_mode(self):
        cfg = WirelessConfig(rb_count_ul=1, rb_count_dl=1, agent_power_dbm=0.0,
                             distance_ref_m=100.0, log_base="e")
        ch = manual_channel([[math.e - 1.0]], [[1.0]], [100.0])
        alloc = manual_alloc([[1]], [[1]])
        assert link_rate(cfg, ch, alloc, 0, "ul") == pytest.approx(720e3, rel=1e-12)


class TestDelay:
    def test_table_values_give_deadline_exactly(self):
        # 2 kB at 20 Mb/s is 0.8 ms, the configured deadline.
        cfg = WirelessConfig()
        assert tx_delay(cfg, 20e6) == pytest.approx(0.8e-3, rel=1e-12)

    def test_infinite_rate_limit(self):
        cfg = WirelessConfig()
        assert tx_delay(cfg, 1e18) < 1e-10

    def test_zero_rate_is_infeasible_sentinel(self):
        assert tx_delay(WirelessConfig(), 0.0) == math.inf

    def test_delay_rate_product_identity(self):
        cfg = WirelessConfig()
        rng = np.random.default_rng(8)
        for _ in range(100):
            rate = float(rng.uniform(1e3, 1e9))
            assert tx_delay(cfg, rate) * rate == pytest.approx(8.0 * cfg.payload_bytes, rel=1e-12)

    def test_boundary_delay_is_violated(self):
        # delay == deadline must count as violated (strict inequality).
        # SNR 7 gives rate exactly B*log2(8) = 2.16 Mb/s; the deadline is set
        # to the exact float the delay computation produces.
        rate = 2.16e6
        boundary = 8.0 * 2000.0 / rate
        cfg = WirelessConfig(rb_count_ul=1, rb_count_dl=1, agent_power_dbm=0.0,
                             bs_power_dbm=0.0, distance_ref_m=100.0,
                             deadline_s=boundary)
        ch = manual_channel([[7.0]], [[7.0]], [100.0])
        alloc = manual_alloc([[1]], [[1]])
        assert link_rate(cfg, ch, alloc, 0, "ul") == rate
        assert tx_delay(cfg, rate) == boundary
        ul_ok, dl_ok = feasibility_check(cfg, ch, alloc, 0)
        assert not ul_ok and not dl_ok

    def test_feasibility_matches_direct_comparison(self):
        rng = np.random.default_rng(9)
        cfg = small_cfg()
        pos = draw_positions(cfg, 3, rng)
        ch = sample_channel(cfg, pos, rng)
        for _ in range(50):
            alloc = manual_alloc(rng.integers(0, 2, (3, 6)), rng.integers(0, 2, (3, 6)))
            for agent in range(3):
                ul_ok, dl_ok = feasibility_check(cfg, ch, alloc, agent)
                assert ul_ok == (tx_delay(cfg, link_rate(cfg, ch, alloc, agent, "ul")) < cfg.deadline_s)
                assert dl_ok == (tx_delay(cfg, link_rate(cfg, ch, alloc, agent, "dl")) < cfg.deadline_s)


class TestAllocation:
    def test_single_participant_gets_best_rbs(self):
        cfg = small_cfg()
        rng = np.random.default_rng(10)
        pos = draw_positions(cfg, 1, rng)
        ch = sample_channel(cfg, pos, rng)
        alloc = allocate_rbs(cfg, ch, [0], "greedy", rng)
        for direction in ("ul", "dl"):
            granted = np.flatnonzero(alloc.matrix(direction)[0])
            if 0 < len(granted) < cfg.rb_count(direction):
                # Granted RBs are exactly the top-|granted| by rate.
                rates = rb_rates(cfg, ch, 0, direction)
                top = set(np.argsort(rates)[::-1][: len(granted)])
                assert set(granted) == top

    def test_two_participants_disjoint_best_rbs(self):
        cfg = WirelessConfig(rb_count_ul=2, rb_count_dl=2, payload_bytes=1e12)
        ch = manual_channel([[9.0, 1.0], [1.0, 9.0]],
                            [[9.0, 1.0], [1.0, 9.0]], [100.0, 100.0])
        rng = np.random.default_rng(0)
        alloc = allocate_rbs(cfg, ch, [0, 1], "greedy", rng)
        assert alloc.e_ul[0, 0] == 1 and alloc.e_ul[1, 1] == 1

    @pytest.mark.parametrize("policy", ALLOC_POLICIES)
    def test_orthogonality_constraints_hold_exactly(self, policy):
        rng = np.random.default_rng(11)
        cfg = small_cfg()
        for _ in range(400):
            n = int(rng.integers(1, 6))
            pos = draw_positions(cfg, n, rng)
            ch = sample_channel(cfg, pos, rng)
            m = int(rng.integers(1, n + 1))
            participants = sorted(rng.choice(n, size=m, replace=False))
            alloc = allocate_rbs(cfg, ch, participants, policy, rng)
            for direction in ("ul", "dl"):
                e = alloc.matrix(direction)
                assert e.sum() <= cfg.rb_count(direction)          # total cap
                assert np.all(e.sum(axis=0) <= 1)                  # orthogonal
                outsiders = [a for a in range(n) if a not in participants]
                assert np.all(e[outsiders] == 0)

    def test_greedy_matches_exhaustive_on_small_instances(self):
        # >= 80% exact optimum over 200 random instances (<= 4 agents x 6 RBs),
        # and never fewer deadline-met agents than the random policy on the
        # batch mean.
        rng = np.random.default_rng(12)
        matches, greedy_total, random_total = 0, 0, 0
        n_instances = 200
        for _ in range(n_instances):
            n_part = int(rng.integers(2, 5))
            n_rbs = int(rng.integers(4, 7))
            table = rng.gamma(2.0, 0.35, size=(n_part, n_rbs))
            needed = 1.0
            g = _allocate_direction(table, needed, "greedy", rng)
            r = _allocate_direction(table, needed, "random", rng)
            g_count = int(((g * table).sum(axis=1) > needed).sum())
            r_count = int(((r * table).sum(axis=1) > needed).sum())
            best = exhaustive_best_count(table, needed)
            assert g_count <= best
            matches += g_count == best
            greedy_total += g_count
            random_total += r_count
        assert matches >= 0.8 * n_instances
        assert greedy_total >= random_total

    def test_greedy_never_below_random_across_seeded_batches(self):
        for batch_seed in range(5):
            rng = np.random.default_rng(100 + batch_seed)
            g_tot, r_tot = 0, 0
            for _ in range(100):
                table = rng.gamma(2.0, 0.5, size=(3, 6))
                g = _allocate_direction(table, 1.0, "greedy", rng)
                r = _allocate_direction(table, 1.0, "random", rng)
                g_tot += int(((g * table).sum(axis=1) > 1.0).sum())
                r_tot += int(((r * table).sum(axis=1) > 1.0).sum())
            assert g_tot >= r_tot

    def test_feasibility_flags_recorded(self):
        cfg = small_cfg()
        rng = np.random.default_rng(13)
        pos = draw_positions(cfg, 3, rng)
        ch = sample_channel(cfg, pos, rng)
        alloc = allocate_rbs(cfg, ch, [0, 2], "greedy", rng)
        assert set(alloc.feasible_ul) == {0, 2}
        for a in (0, 2):
            ul_ok, dl_ok = feasibility_check(cfg, ch, alloc, a)
            assert alloc.feasible_ul[a] == ul_ok
            assert alloc.feasible_dl[a] == dl_ok

    def test_unknown_policy_rejected(self):
        cfg = small_cfg()
        rng = np.random.default_rng(14)
        pos = draw_positions(cfg, 1, rng)
        ch = sample_channel(cfg, pos, rng)
        with pytest.raises(DomainError):
            allocate_rbs(cfg, ch, [0], "round-robin", rng)
