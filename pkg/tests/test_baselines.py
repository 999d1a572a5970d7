import numpy as np
import pytest

from fracrank.baselines import (BaselineConfig, SVPParams, SVTParams, default_svp_params,
                                default_svt_params, rank_projection, soft_threshold_singular,
                                svp_solve, svt_solve)
from fracrank.linops import SampleSet
from fracrank.svthresh import numerical_rank, svd


def _instance(seed, m=20, n=25, r=2, sr=0.6):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((m, r)) @ rng.standard_normal((r, n))
    flat = rng.choice(m * n, size=int(round(sr * m * n)), replace=False)
    return M, SampleSet.from_matrix(M, flat)


def test_defaults():
    M, om = _instance(0)
    p = default_svt_params(om)
    assert p.tau == pytest.approx(5 * np.sqrt(20 * 25))
    assert p.delta == pytest.approx(1.2 / om.sampling_ratio)
    assert default_svp_params(om, 3).eta == pytest.approx(1 / (1.1 * om.sampling_ratio))
    with pytest.raises(ValueError):
        SVTParams(0.0, 1.0)
    with pytest.raises(ValueError):
        SVPParams(0, 1.0)


def test_soft_threshold_diag():
    np.testing.assert_allclose(soft_threshold_singular(np.diag([5.0, 1.0]), 2.0),
                               np.diag([3.0, 0.0]), atol=1e-12)


def test_soft_threshold_nonexpansive():
    rng = np.random.default_rng(1)
    x = rng.uniform(0, 10, 50)
    y = rng.uniform(0, 10, 50)
    sx, sy = np.maximum(x - 3, 0), np.maximum(y - 3, 0)
    assert np.all(np.abs(sx - sy) <= np.abs(x - y))


def test_rank_projection_diagonal():
    out = rank_projection(np.diag([1.0, -4.0, 3.0, 0.5]), 2)
    np.testing.assert_allclose(out, np.diag([0.0, -4.0, 3.0, 0.0]), atol=1e-12)


def test_zero_observations():
    om = SampleSet.from_indices((4, 5), [0, 2], [1, 3], [0.0, 0.0])
    res = svt_solve(om, BaselineConfig(SVTParams(1.0, 1.0), max_iter=5))
    np.testing.assert_array_equal(res.x_opt, 0.0)
    res = svp_solve(om, BaselineConfig(SVPParams(1, 1.0), max_iter=5))
    np.testing.assert_array_equal(res.x_opt, 0.0)


def test_svp_full_sampling_one_step():
    M, _ = _instance(2)
    om = SampleSet.from_mask(M, np.ones(M.shape, bool))
    res = svp_solve(om, BaselineConfig(SVPParams(2, 1.0), max_iter=1))
    np.testing.assert_allclose(res.x_opt, M, atol=1e-10)


def test_svp_iterates_respect_rank():
    M, om = _instance(3)
    res = svp_solve(om, BaselineConfig(default_svp_params(om, 2), max_iter=40), truth=M)
    assert np.all(res.trace.ranks <= 2)
    assert res.trace.re[-1] < res.trace.re[0]
    with pytest.raises(ValueError):
        svp_solve(om, BaselineConfig(SVPParams(20, 1.0)))


def test_svt_recovers_easy_instance():
    M, om = _instance(4, sr=0.8)
    res = svt_solve(om, BaselineConfig(default_svt_params(om), tol=1e-3, max_iter=3000,
                                       stop="target"), truth=M)
    assert res.converged and res.relative_error <= 1e-3
    assert numerical_rank(svd(res.x_opt).sigma, 1e-6) <= 10
