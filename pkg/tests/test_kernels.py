"""Compiled-vs-reference kernel backend agreement.

Every hot kernel exists twice (Cython extension, NumPy/Python fallback);
these tests pin their numerical agreement on random instances. The env
physics and the Adam update use the same libm operations in the same
order and must agree bit-exactly; the dense forward accumulates in a
different order, so it gets a tight tolerance instead.
"""

import numpy as np
import pytest

from collabrl import kernels
from collabrl.kernels import get_backend

reference = get_backend("reference")
try:
    compiled = get_backend("compiled")
except ImportError:  # pragma: no cover - build without the extension
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None,
                                    reason="compiled extension not built")


def random_packed(rng, dims):
    outs = np.array([d[1] for d in dims], dtype=np.int64)
    ins = np.array([d[0] for d in dims], dtype=np.int64)
    parts = []
    for i, o in dims:
        parts.append(rng.normal(size=o * i))
        parts.append(rng.normal(size=o))
    return np.ascontiguousarray(np.concatenate(parts)), outs, ins


@needs_compiled
class TestBackendAgreement:
    def test_selected_backend_is_compiled_by_default(self):
        assert kernels.BACKEND_NAME in ("compiled", "reference")
        assert kernels.HAVE_COMPILED in (True, None)

    def test_forward_agrees(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            n_layers = int(rng.integers(1, 4))
            widths = [int(rng.integers(1, 40)) for _ in range(n_layers + 1)]
            dims = list(zip(widths[:-1], widths[1:]))
            packed, outs, ins = random_packed(rng, dims)
            x = rng.normal(size=widths[0])
            a = reference.mlp_forward(packed, outs, ins, x)
            b = compiled.mlp_forward(packed, outs, ins, x)
            assert np.allclose(a, b, rtol=1e-12, atol=1e-12)

    def test_adam_update_bit_identical(self):
        rng = np.random.default_rng(1)
        n = 4096
        p1 = rng.normal(size=n)
        g = rng.normal(size=n)
        m1, v1 = rng.uniform(0, 1, n), rng.uniform(0, 1, n)
        p2, m2, v2 = p1.copy(), m1.copy(), v1.copy()
        reference.adam_update(p1, g, m1, v1, 7, 1e-3, 0.9, 0.999, 1e-8)
        compiled.adam_update(p2, g, m2, v2, 7, 1e-3, 0.9, 0.999, 1e-8)
        assert np.array_equal(p1, p2)
        assert np.array_equal(m1, m2)
        assert np.array_equal(v1, v2)

    def test_env_steps_bit_identical(self):
        rng = np.random.default_rng(2)
        for _ in range(200):
            s = tuple(rng.normal(scale=0.5, size=4))
            force = 10.0 if rng.integers(2) else -10.0
            assert reference.cartpole_step(*s, force) == compiled.cartpole_step(*s, force)
            torque = float(rng.integers(-1, 2))
            assert reference.acrobot_step(*s, torque) == compiled.acrobot_step(*s, torque)

    @pytest.mark.parametrize("env_kind", [0, 1])
    def test_episode_chunk_agrees(self, env_kind):
        rng = np.random.default_rng(3)
        obs_dim = 4 if env_kind == 0 else 6
        n_act = 2 if env_kind == 0 else 3
        cap = 200 if env_kind == 0 else 500
        for trial in range(5):
            packed, outs, ins = random_packed(
                rng, [(obs_dim, 24), (24, 24), (24, n_act + 1)])
            packed *= 0.3
            coords = rng.uniform(-0.05, 0.05, 4)
            seed = 1000 + trial
            out_a = reference.episode_chunk(packed, outs, ins, env_kind,
                                            np.random.default_rng(seed),
                                            coords, 0, cap, cap)
            out_b = compiled.episode_chunk(packed, outs, ins, env_kind,
                                           np.random.default_rng(seed),
                                           coords, 0, cap, cap)
            for a, b in zip(out_a, out_b):
                if isinstance(a, np.ndarray):
                    assert a.shape == b.shape
                    assert np.allclose(a, b, rtol=1e-10, atol=1e-12)
                else:
                    assert a == b

    def test_chunk_resumes_mid_episode(self):
        # Chunked stepping from persisted coords equals one long chunk.
        rng = np.random.default_rng(9)
        packed, outs, ins = random_packed(rng, [(4, 12), (12, 3)])
        packed *= 0.3
        coords = rng.uniform(-0.05, 0.05, 4)
        whole = compiled.episode_chunk(packed, outs, ins, 0,
                                       np.random.default_rng(77), coords, 0, 200, 64)
        first = compiled.episode_chunk(packed, outs, ins, 0,
                                       np.random.default_rng(77), coords, 0, 200, 32)
        assert np.array_equal(whole[0][:len(first[0])], first[0])
        assert np.array_equal(whole[1][:len(first[1])], first[1])

    @pytest.mark.parametrize("env_kind", [0, 1])
    def test_episode_return_agrees(self, env_kind):
        rng = np.random.default_rng(4)
        obs_dim = 4 if env_kind == 0 else 6
        n_act = 2 if env_kind == 0 else 3
        cap = 200 if env_kind == 0 else 500
        for trial in range(10):
            packed, outs, ins = random_packed(
                rng, [(obs_dim, 16), (16, n_act + 1)])
            packed *= 0.3
            seed = 2000 + trial
            a = reference.episode_return(packed, outs, ins, env_kind,
                                         np.random.default_rng(seed), cap)
            b = compiled.episode_return(packed, outs, ins, env_kind,
                                        np.random.default_rng(seed), cap)
            assert a == b

    def test_env_var_forces_reference(self, tmp_path):
        import subprocess
        import sys

        code = ("import collabrl.kernels as k; print(k.BACKEND_NAME)")
        out = subprocess.run(
            [sys.executable, "-c", code],
            env={"COLLABRL_KERNELS": "reference", "PATH": "/usr/bin:/bin"},
            capture_output=True, text=True, cwd="/",
        )
        assert out.stdout.strip() == "reference"
