import os
import subprocess
import sys

import numpy as np
import pytest

from fracrank import _kernels
from fracrank.frac import ThresholdSpec

pytestmark = pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba not installed")


def _both(name):
    return _kernels.NUMPY_KERNELS[name], _kernels.NUMBA_KERNELS[name]


def test_prox_array_parity():
    ref, fast = _both("prox_array")
    rng = np.random.default_rng(0)
    for _ in range(50):
        spec = ThresholdSpec.resolve(rng.uniform(0.5, 100), rng.uniform(1e-3, 10), rng.uniform(0.1, 1))
        x = rng.uniform(-20, 20, 200)
        x[:5] = [0.0, spec.t_star, -spec.t_star, np.nextafter(spec.t_star, 1), 1e6]
        a_out, a_bad = ref(x, spec.lam_mu, spec.a, spec.t_star)
        b_out, b_bad = fast(x, spec.lam_mu, spec.a, spec.t_star)
        assert a_bad == b_bad == 0
        np.testing.assert_allclose(a_out, b_out, rtol=1e-13, atol=1e-14)


def test_prox_array_flags_bad_inputs():
    for k in _both("prox_array"):
        out, nbad = k(np.array([1e-3, 5.0]), 10.0, 100.0, 0.0)
        assert nbad == 1 and np.isnan(out[0]) and np.isfinite(out[1])


def test_grid_and_gradient_parity():
    ref, fast = _both("grid_argmin")
    assert ref(1.3, 0.4, 2.0, -3.0, 1e-3, 6001) == pytest.approx(fast(1.3, 0.4, 2.0, -3.0, 1e-3, 6001))
    ref, fast = _both("gradient_step")
    rng = np.random.default_rng(1)
    x = rng.standard_normal(40)
    idx = np.sort(rng.choice(40, 15, replace=False)).astype(np.int64)
    b = rng.standard_normal(15)
    np.testing.assert_array_equal(ref(x, idx, b, 0.9), fast(x, idx, b, 0.9))


def test_fisher_yates_parity():
    ref, fast = _both("fisher_yates")
    u = np.random.default_rng(2).random(300)
    np.testing.assert_array_equal(ref(1000, 300, u), fast(1000, 300, u))


def _backend_in_subprocess(value):
    env = dict(os.environ, FRACRANK_BACKEND=value)
    return subprocess.run([sys.executable, "-c", "import fracrank; print(fracrank.BACKEND)"],
                          env=env, capture_output=True, text=True)


def test_env_flag_selects_backend():
    assert _backend_in_subprocess("numpy").stdout.strip() == "numpy"
    assert _backend_in_subprocess("numba").stdout.strip() == "numba"
    bad = _backend_in_subprocess("fortran")
    assert bad.returncode != 0 and "FRACRANK_BACKEND" in bad.stderr
