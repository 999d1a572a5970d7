import numpy as np
import pytest

from fracrank.errors import DegenerateError, FormatError, ShapeError
from fracrank.linops import (DenseMap, SampleSet, dense_map, power_iteration, read_samples_csv,
                             sampling_map, write_samples_csv)


def _adjoint_gap(linmap, rng, trials=100):
    worst = 0.0
    for _ in range(trials):
        x = rng.standard_normal(linmap.shape)
        y = rng.standard_normal(linmap.out_dim)
        lhs = float(linmap.apply(x) @ y)
        rhs = float(np.sum(x * linmap.adjoint(y)))
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    return worst


def random_omega(rng, m, n, s):
    flat = rng.choice(m * n, size=s, replace=False)
    return SampleSet.from_flat((m, n), flat, rng.standard_normal(s))


def test_sample_set_sorted_and_validated():
    om = SampleSet.from_indices((2, 3), [1, 0, 0], [2, 1, 0], [6.0, 2.0, 1.0])
    assert om.flat.tolist() == [0, 1, 5]
    assert om.values.tolist() == [1.0, 2.0, 6.0]
    assert om.indices == [(0, 0), (0, 1), (1, 2)]
    assert om.sampling_ratio == pytest.approx(0.5)
    with pytest.raises(ValueError):
        SampleSet.from_indices((2, 2), [0, 0], [1, 1], [1.0, 2.0])
    with pytest.raises(ValueError):
        SampleSet.from_indices((2, 2), [2], [0], [1.0])
    with pytest.raises(ValueError):
        SampleSet.from_indices((2, 2), [], [], [])


def test_full_sampling_is_vectorisation():
    X = np.arange(4.0).reshape(2, 2)
    A = sampling_map(SampleSet.from_mask(X, np.ones((2, 2), bool)))
    np.testing.assert_array_equal(A.apply(X), X.ravel())
    np.testing.assert_array_equal(A.adjoint(X.ravel()), X)


def test_single_coordinate():
    X = np.array([[3.0, 1.0], [4.0, 1.0]])
    A = sampling_map(SampleSet.from_matrix(X, [0]))
    np.testing.assert_array_equal(A.apply(X), [3.0])
    np.testing.assert_array_equal(A.adjoint(np.array([5.0])), [[5.0, 0.0], [0.0, 0.0]])


def test_sampling_adjoint_and_projector():
    rng = np.random.default_rng(0)
    om = random_omega(rng, 6, 9, 20)
    A = sampling_map(om)
    assert _adjoint_gap(A, rng) <= 1e-10
    y = rng.standard_normal(A.out_dim)
    np.testing.assert_array_equal(A.apply(A.adjoint(y)), y)
    x = rng.standard_normal(A.shape)
    px = A.adjoint(A.apply(x))
    np.testing.assert_array_equal(px, x * om.mask())
    np.testing.assert_array_equal(A.adjoint(A.apply(px)), px)


def test_sampling_gradient_step_matches_generic():
    rng = np.random.default_rng(1)
    om = random_omega(rng, 5, 7, 12)
    A = sampling_map(om)
    x = rng.standard_normal(A.shape)
    ref = x + 0.7 * A.adjoint(om.values - A.apply(x))
    np.testing.assert_allclose(A.gradient_step(x, om.values, 0.7), ref, atol=1e-15)


def test_dense_map_examples():
    rng = np.random.default_rng(2)
    I = dense_map(np.eye(4), (2, 2))
    X = rng.standard_normal((2, 2))
    np.testing.assert_array_equal(I.apply(X), X.ravel())
    assert _adjoint_gap(dense_map(rng.standard_normal((3, 4)), (2, 2)), rng) <= 1e-10
    assert 2.0 <= dense_map(2 * np.eye(4), (2, 2)).norm_bound <= 2.0 + 1e-6
    with pytest.raises(ShapeError):
        DenseMap(np.eye(3), (2, 2))


def test_norm_bound_dominates():
    rng = np.random.default_rng(3)
    A = dense_map(rng.standard_normal((8, 12)), (3, 4))
    for _ in range(50):
        x = rng.standard_normal((3, 4))
        assert np.linalg.norm(A.apply(x)) <= A.norm_bound * np.linalg.norm(x) * (1 + 1e-12)


def test_power_iteration_estimates():
    rng = np.random.default_rng(4)
    est = power_iteration(sampling_map(random_omega(rng, 4, 5, 7)))
    assert 1.0 <= est <= 1.02
    assert 3.0 <= power_iteration(dense_map(3 * np.eye(6), (2, 3))) <= 3.04
    M = rng.standard_normal((10, 25))
    top = np.linalg.svd(M, compute_uv=False)[0]
    assert power_iteration(dense_map(M, (5, 5))) == pytest.approx(top, rel=0.01)


def test_power_iteration_zero_operator():
    with pytest.raises(DegenerateError):
        power_iteration(dense_map(np.zeros((3, 4)), (2, 2)))


def test_samples_csv_round_trip(tmp_path):
    rng = np.random.default_rng(5)
    om = random_omega(rng, 4, 6, 9)
    path = tmp_path / "s.csv"
    write_samples_csv(om, path)
    back = read_samples_csv(path, shape=(4, 6))
    np.testing.assert_array_equal(back.flat, om.flat)
    np.testing.assert_array_equal(back.values, om.values)


def test_samples_csv_errors(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("row,col,v\n0,0,1\n")
    with pytest.raises(FormatError, match="byte offset 0"):
        read_samples_csv(bad)
    bad.write_text("i,j,value\n0,x,1\n")
    with pytest.raises(FormatError):
        read_samples_csv(bad)
