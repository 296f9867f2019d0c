import importlib
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adventurer import _kernels_py, kernels

try:
    from adventurer import _kernels as compiled
except ImportError:  # extension not built
    compiled = None

needs_compiled = pytest.mark.skipif(compiled is None, reason="compiled kernels not built")


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    if compiled is not None and not os.environ.get("ADVENTURER_PURE_PYTHON"):
        assert kernels.BACKEND == "cython"


def test_env_var_forces_fallback():
    code = "from adventurer import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, ADVENTURER_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_compiled
@settings(max_examples=200, deadline=None)
@given(st.integers(1, 60), st.floats(0.5, 1.0), st.floats(0.0, 1.0), st.integers(0, 2**32 - 1))
def test_gae_backends_agree(n, gamma, lam, seed):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=n), rng.normal(size=n)
    d = rng.random(n) < 0.1
    last = float(rng.normal())
    a = compiled.gae(r, v, d, last, gamma, lam)
    b = _kernels_py.gae(r, v, d, last, gamma, lam)
    np.testing.assert_array_equal(a, b)


@needs_compiled
def test_histogram_backends_agree():
    rng = np.random.default_rng(0)
    for bins in (1, 2, 20, 33):
        x = np.concatenate([rng.random(500), [0.0, 1.0, 0.5, 0.05]])
        np.testing.assert_array_equal(compiled.histogram(x, bins), _kernels_py.histogram(x, bins))


@needs_compiled
def test_kl_backends_agree():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p = rng.integers(0, 20, 20).astype(float)
        q = rng.integers(0, 20, 20).astype(float)
        p[0] += 1
        q[0] += 1
        assert compiled.smoothed_kl(p, q, 1e-6) == pytest.approx(_kernels_py.smoothed_kl(p, q, 1e-6),
                                                                 rel=1e-13, abs=1e-15)


@pytest.mark.parametrize("impl", ["python", "compiled"])
def test_histogram_edges(impl):
    mod = _kernels_py if impl == "python" else compiled
    if mod is None:
        pytest.skip("compiled kernels not built")
    np.testing.assert_array_equal(mod.histogram(np.array([0.0, 0.49, 0.5, 1.0]), 2), [2, 2])


def test_kernel_module_reload_is_stable():
    again = importlib.reload(kernels)
    assert again.BACKEND in ("cython", "python")
