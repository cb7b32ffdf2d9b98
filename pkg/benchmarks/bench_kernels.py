"""Micro-benchmark of the compiled kernel backend against the NumPy fallback.

Run:  python benchmarks/bench_kernels.py [--repeats N]

Covers the per-step hot kernels (dense forward, Adam update, environment
physics, fused episode loops) plus one macro number (a full local training
round). Numerical agreement between the backends is asserted on the fly;
timings print as a table with the compiled/referenced speedup.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from collabrl import envs, nn
from collabrl.agent import AgentConfig, AgentProfile, local_train_round
from collabrl.kernels import get_backend
from collabrl.orchestrator import family_shapes


def timeit(fn, repeats, inner=1):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def net_arrays(hidden=(128, 128), obs_dim=6, n_actions=3, seed=0):
    spec = envs.acrobot_spec()
    params = nn.init_params(family_shapes(spec, hidden), seed)
    return params


def bench_backend(backend, params, repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(size=int(params.ins[0]))
    results = {}

    results["mlp_forward"] = timeit(
        lambda: backend.mlp_forward(params.data, params.outs, params.ins, x),
        repeats, inner=2000)

    grad = rng.normal(size=params.data.size)
    p = params.data.copy()
    m = np.zeros_like(p)
    v = np.zeros_like(p)
    step = [0]

    def adam():
        step[0] += 1
        backend.adam_update(p, grad, m, v, step[0], 3e-4, 0.9, 0.999, 1e-8)

    results["adam_update"] = timeit(adam, repeats, inner=500)

    results["cartpole_step"] = timeit(
        lambda: backend.cartpole_step(0.01, -0.02, 0.03, 0.04, 10.0),
        repeats, inner=20000)
    results["acrobot_step"] = timeit(
        lambda: backend.acrobot_step(0.05, -0.03, 0.1, -0.2, 1.0),
        repeats, inner=20000)

    def episode():
        backend.episode_return(params.data, params.outs, params.ins, 1,
                               np.random.default_rng(7), 500)

    results["episode_return(500)"] = timeit(episode, repeats, inner=2)
    return results


def assert_agreement(ref, fast, params):
    rng = np.random.default_rng(1)
    x = rng.normal(size=int(params.ins[0]))
    a = ref.mlp_forward(params.data, params.outs, params.ins, x)
    b = fast.mlp_forward(params.data, params.outs, params.ins, x)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12), "forward mismatch"
    ra = ref.episode_return(params.data, params.outs, params.ins, 1,
                            np.random.default_rng(3), 500)
    rb = fast.episode_return(params.data, params.outs, params.ins, 1,
                             np.random.default_rng(3), 500)
    assert ra == rb, "episode return mismatch"


def bench_macro(repeats):
    """One local training round (Acrobot, default config) per backend."""
    rows = {}
    for name in ("reference", "compiled"):
        try:
            backend = get_backend(name)
        except ImportError:
            continue
        import collabrl.kernels as k
        saved = (k.mlp_forward, k.adam_update, k.cartpole_step,
                 k.acrobot_step, k.episode_chunk, k.episode_return)
        k.mlp_forward = backend.mlp_forward
        k.adam_update = backend.adam_update
        k.cartpole_step = backend.cartpole_step
        k.acrobot_step = backend.acrobot_step
        k.episode_chunk = backend.episode_chunk
        k.episode_return = backend.episode_return
        try:
            spec = envs.acrobot_spec()
            params = nn.init_params(family_shapes(spec, (128, 128)), 0)
            agent = AgentProfile(0, spec, 1, 0, AgentConfig(), params,
                                 nn.init_adam(params, lr=3e-4))
            rows[name] = timeit(
                lambda: local_train_round(agent, agent.config, np.random.default_rng(5)),
                max(2, repeats // 2))
        finally:
            (k.mlp_forward, k.adam_update, k.cartpole_step,
             k.acrobot_step, k.episode_chunk, k.episode_return) = saved
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    ref = get_backend("reference")
    try:
        fast = get_backend("compiled")
    except ImportError:
        print("compiled extension not built; run `python setup.py build_ext --inplace`")
        return 1

    params = net_arrays()
    assert_agreement(ref, fast, params)

    ref_times = bench_backend(ref, params, args.repeats)
    fast_times = bench_backend(fast, params, args.repeats)

    print(f"{'kernel':<22}{'reference':>14}{'compiled':>14}{'speedup':>10}")
    for key in ref_times:
        r, f = ref_times[key], fast_times[key]
        print(f"{key:<22}{r * 1e6:>12.2f}us{f * 1e6:>12.2f}us{r / f:>9.1f}x")

    macro = bench_macro(args.repeats)
    if len(macro) == 2:
        r, f = macro["reference"], macro["compiled"]
        print(f"{'local_train_round':<22}{r * 1e3:>12.2f}ms{f * 1e3:>12.2f}ms{r / f:>9.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
