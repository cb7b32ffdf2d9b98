"""Experiment driver: batch runs, sweeps, and CSV emission.

Outputs under ``--out``:

* ``config.txt`` — the resolved configuration (round-trippable echo);
* ``rounds.csv`` — one row per (cell, round, agent):
  ``mode,sweep_value,seed,round,agent,return,loss,selected,W,ul_delay,dl_delay,deadline_met``;
* ``summary.csv`` — one row per cell with the target agent's mean return
  over the final window: ``mode,sweep_value,seed,target,final_mean_return``;
* ``cells/<mode>__<sweep>__<seed>/wireless.csv`` — per-transmission log
  ``round,agent,dir,rbs,rate_bps,delay_s,deadline_met``;
* ``cells/<mode>__<sweep>__<seed>/kg_NNNN.csv`` — per-round knowledge-graph
  row ``src,dst,C,S_raw,S_norm,mu,selected`` (similarity-driven modes, when
  ``run.kg_export`` is enabled).

All randomness flows from the configured seeds; a repeated invocation with
the same inputs produces byte-identical files. Cells may run in parallel
processes (``run.workers``); ``--deterministic`` forces the single-process,
single-threaded reference schedule, which produces the same bytes.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import similarity
from .config import (
    MODES,
    SWEEP_NAMES,
    ExperimentConfig,
    SweepSpec,
    apply_sweep_value,
    config_text,
    default_config,
    parse_config,
)
from .errors import CollabRLError, ConfigError
from .orchestrator import run_experiment
from .wireless import ALLOC_POLICIES

_REP_SEED_STRIDE = 1_000_000


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "True" if value else "False"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _cell_label(mode, sweep_value, seed) -> str:
    sv = "none" if sweep_value is None else _fmt(sweep_value)
    return f"{mode}__{sv}__{seed}"


def build_cells(cfg: ExperimentConfig, sweep: SweepSpec | None) -> list:
    """Ordered (mode, sweep_value, seed) cells for one batch."""
    values = [None] if sweep is None else list(sweep.values)
    reps = 1 if sweep is None else sweep.repetitions
    cells = []
    for mode in cfg.modes:
        for value in values:
            for rep in range(reps):
                for seed in cfg.seeds:
                    cells.append((mode, value, seed + rep * _REP_SEED_STRIDE))
    return cells


def _run_cell(args):
    cfg, sweep_name, mode, value, seed = args
    cell_cfg = cfg if value is None else apply_sweep_value(cfg, sweep_name, value)
    result = run_experiment(cell_cfg, mode, seed, sweep_value=value)
    return (mode, value, seed), result


def _rounds_rows(result):
    rows = []
    for log in result.rounds:
        for rec in log.records:
            rows.append(
                [
                    result.mode,
                    "" if result.sweep_value is None else _fmt(result.sweep_value),
                    result.seed,
                    log.round_index,
                    rec.agent_id,
                    _fmt(rec.episode_return),
                    _fmt(rec.loss),
                    _fmt(rec.selected),
                    _fmt(rec.weight),
                    _fmt(rec.ul_delay),
                    _fmt(rec.dl_delay),
                    _fmt(rec.deadline_met),
                ]
            )
    return rows


def _wireless_lines(result, deadline_s):
    lines = ["round,agent,dir,rbs,rate_bps,delay_s,deadline_met"]
    for log in result.rounds:
        if not log.selected:
            continue
        participants = sorted({*log.selected, log.target})
        for agent in participants:
            rec = log.records[agent]
            for direction, rbs, rate, delay in (
                ("ul", rec.ul_rbs, rec.ul_rate, rec.ul_delay),
                ("dl", rec.dl_rbs, rec.dl_rate, rec.dl_delay),
            ):
                met = delay < deadline_s
                lines.append(
                    f"{log.round_index},{agent},{direction},{rbs},"
                    f"{_fmt(rate)},{_fmt(delay)},{_fmt(met)}"
                )
    return lines


def run_batch(cfg: ExperimentConfig, sweep: SweepSpec | None, out_dir,
              deterministic: bool = False) -> int:
    """Run every (mode, sweep value, seed) cell and write the CSV outputs."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cells = build_cells(cfg, sweep)
    jobs = [(cfg, None if sweep is None else sweep.name, mode, value, seed)
            for mode, value, seed in cells]

    workers = 1 if deterministic else cfg.workers
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = dict(pool.map(_run_cell, jobs))
    else:
        results = dict(map(_run_cell, jobs))

    echo = config_text(cfg)
    if sweep is not None:
        echo += (f"# sweep: {sweep.name} = "
                 f"{','.join(_fmt(v) for v in sweep.values)}"
                 f" (repetitions = {sweep.repetitions})\n")
    (out / "config.txt").write_text(echo, encoding="utf-8")

    rounds_lines = ["mode,sweep_value,seed,round,agent,return,loss,selected,W,"
                    "ul_delay,dl_delay,deadline_met"]
    summary_lines = ["mode,sweep_value,seed,target,final_mean_return"]
    for key in cells:
        result = results[key]
        rounds_lines.extend(",".join(str(v) for v in row) for row in _rounds_rows(result))
        summary_lines.append(
            f"{result.mode},"
            f"{'' if result.sweep_value is None else _fmt(result.sweep_value)},"
            f"{result.seed},{result.target},{_fmt(result.target_final_return)}"
        )
    (out / "rounds.csv").write_text("\n".join(rounds_lines) + "\n", encoding="utf-8")
    (out / "summary.csv").write_text("\n".join(summary_lines) + "\n", encoding="utf-8")

    for (mode, value, seed) in cells:
        result = results[(mode, value, seed)]
        cell_cfg = cfg if value is None else apply_sweep_value(cfg, sweep.name, value)
        cell_dir = out / "cells" / _cell_label(mode, value, seed)
        cell_dir.mkdir(parents=True, exist_ok=True)
        wl = _wireless_lines(result, cell_cfg.wireless.deadline_s)
        (cell_dir / "wireless.csv").write_text("\n".join(wl) + "\n", encoding="utf-8")
        if cfg.kg_export:
            for log in result.rounds:
                if log.kg_edges is None:
                    continue
                lines = similarity.kg_csv_lines(log.kg_edges, set(log.selected))
                (cell_dir / f"kg_{log.round_index:04d}.csv").write_text(
                    "\n".join(lines) + "\n", encoding="utf-8"
                )
    return 0


def _parse_sweep_flag(raw: str) -> SweepSpec:
    if "=" not in raw:
        raise ConfigError("--sweep expects NAME=V1,V2,...")
    name, values = raw.split("=", 1)
    name = name.strip()
    if name not in SWEEP_NAMES:
        raise ConfigError(f"sweep name must be one of {SWEEP_NAMES}, got {name!r}")
    parts = [p.strip() for p in values.split(",") if p.strip()]
    if not parts:
        raise ConfigError("--sweep needs a non-empty value list")
    if name == "rb_count":
        parsed = tuple(int(p) for p in parts)
    else:
        parsed = tuple(float(p) for p in parts)
    return SweepSpec(name=name, values=parsed)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="collabrl",
        description="Collaborative-RL-over-cellular experiment driver",
    )
    parser.add_argument("--config", type=Path, default=None,
                        help="sectioned key=value config file (defaults used when omitted)")
    parser.add_argument("--mode", choices=MODES, default=None,
                        help="restrict the batch to one mode")
    parser.add_argument("--rb-policy", choices=ALLOC_POLICIES, default=None,
                        help="override the RB allocation policy")
    parser.add_argument("--sweep", type=str, default=None, metavar="NAME=V1,V2,...",
                        help=f"sweep one parameter of {SWEEP_NAMES}")
    parser.add_argument("--seeds", type=str, default=None, metavar="S1,S2,...",
                        help="override the seed list")
    parser.add_argument("--out", type=Path, default=Path("out"),
                        help="output directory (default: ./out)")
    parser.add_argument("--deterministic", action="store_true",
                        help="force the single-threaded reference schedule")
    args = parser.parse_args(argv)

    try:
        if args.config is not None:
            cfg = parse_config(args.config.read_text(encoding="utf-8"))
        else:
            cfg = default_config()
        from dataclasses import replace

        if args.mode is not None:
            cfg = replace(cfg, modes=(args.mode,))
        if args.rb_policy is not None:
            cfg = replace(cfg, rb_policy=args.rb_policy)
        if args.seeds is not None:
            seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
            if not seeds:
                raise ConfigError("--seeds needs at least one integer")
            cfg = replace(cfg, seeds=seeds)
        sweep = _parse_sweep_flag(args.sweep) if args.sweep is not None else None
        return run_batch(cfg, sweep, args.out, deterministic=args.deterministic)
    except (CollabRLError, OSError, ValueError) as exc:
        print(f"collabrl: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
