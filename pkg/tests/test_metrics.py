import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import cdist

from cyclemodal.metrics import dcor_matrix, distance_correlation, nmse, pearson_matrix


def dcov2_oracle(x, y):
    # V-statistic form dCov^2 = S1 + S2 - 2 S3, no double centring involved
    a = cdist(x.reshape(len(x), -1), x.reshape(len(x), -1))
    b = cdist(y.reshape(len(y), -1), y.reshape(len(y), -1))
    s1 = np.mean(a * b)
    s2 = a.mean() * b.mean()
    s3 = np.mean(a.mean(axis=1) * b.mean(axis=1))
    return s1 + s2 - 2 * s3


def dcor_oracle(x, y):
    return np.sqrt(dcov2_oracle(x, y) / np.sqrt(dcov2_oracle(x, x) * dcov2_oracle(y, y)))


# -- NMSE ----------------------------------------------------------------------

def test_nmse_perfect_and_mean_predictor():
    y = np.random.default_rng(0).standard_normal((500, 3))
    assert nmse(y, y) == 0.0
    assert nmse(np.full_like(y, y.mean()), y) == pytest.approx(100.0, abs=1e-12)


def test_nmse_hand_example():
    assert nmse([0, 1, 2, 5], [0, 1, 2, 3]) == pytest.approx(80.0, rel=1e-14)


def test_nmse_errors():
    with pytest.raises(ValueError, match="constant"):
        nmse([1, 2], [3, 3])
    with pytest.raises(ValueError, match="length"):
        nmse([1, 2, 3], [1, 2])


@given(st.floats(0.1, 100), st.floats(-50, 50))
@settings(max_examples=25)
def test_nmse_affine_invariant(a, b):
    rng = np.random.default_rng(1)
    y = rng.standard_normal(200)
    yh = y + 0.1 * rng.standard_normal(200)
    assert nmse(a * yh + b, a * y + b) == pytest.approx(nmse(yh, y), rel=1e-8)


# -- Pearson -------------------------------------------------------------------

def test_pearson_basic():
    x = np.random.default_rng(2).standard_normal(100)
    R = pearson_matrix(np.column_stack([x, x, -x])).values
    assert R[0, 1] == pytest.approx(1.0) and R[0, 2] == pytest.approx(-1.0)


def test_pearson_independent_normals():
    X = np.random.default_rng(3).standard_normal((100000, 3))
    assert pearson_matrix(X).max_off_diagonal() < 0.02


def test_pearson_constant_column_named():
    X = np.random.default_rng(4).standard_normal((10, 3))
    X[:, 2] = 1.0
    with pytest.raises(ValueError, match="column 2"):
        pearson_matrix(X)


# -- distance correlation --------------------------------------------------------

def test_dcor_self_is_one():
    x = np.random.default_rng(5).standard_normal(300)
    assert abs(distance_correlation(x, x) - 1) < 1e-12


def test_dcor_affine():
    x = np.random.default_rng(6).standard_normal(200)
    assert abs(distance_correlation(x, 3 * x + 2) - 1) < 1e-10


def test_dcor_sees_nonlinear_dependence():
    x = np.random.default_rng(7).uniform(-1, 1, 2000)
    assert distance_correlation(x, x ** 2) > 0.3
    assert abs(pearson_matrix(np.column_stack([x, x ** 2])).values[0, 1]) < 0.05


@given(st.integers(5, 60), st.integers(0, 10 ** 6))
@settings(max_examples=30, deadline=None)
def test_dcor_matches_oracle(n, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 2))
    y = x[:, :1] ** 2 + rng.standard_normal((n, 1))
    d = distance_correlation(x, y)
    assert 0 <= d <= 1 + 1e-12
    assert d == pytest.approx(dcor_oracle(x, y), abs=1e-10)
    assert d == pytest.approx(distance_correlation(y, x), abs=1e-12)


def test_dcor_constant_is_zero():
    assert distance_correlation(np.ones(10), np.arange(10.0)) == 0.0


def test_dcor_matrix_properties():
    rng = np.random.default_rng(8)
    X = rng.standard_normal((5000, 3))
    cm = dcor_matrix(X, subsample=2000, seed=1)
    assert cm.n_used == 2000 and cm.labels == ["u1", "u2", "u3"]
    np.testing.assert_allclose(np.diag(cm.values), 1.0, atol=1e-12)
    np.testing.assert_array_equal(cm.values, cm.values.T)
    assert cm.max_off_diagonal() < 0.1


def test_dcor_matrix_duplicated_column():
    x = np.random.default_rng(9).standard_normal(300)
    assert dcor_matrix(np.column_stack([x, x])).values[0, 1] == pytest.approx(1.0, abs=1e-12)


def test_dcor_matrix_single_column_and_clipping():
    cm = dcor_matrix(np.random.default_rng(10).standard_normal((50, 1)), subsample=2000)
    assert cm.values.tolist() == [[1.0]] and cm.n_used == 50 and cm.max_off_diagonal() == 0.0


def test_dcor_matrix_seeded():
    X = np.random.default_rng(11).standard_normal((3000, 2))
    a, b = dcor_matrix(X, 500, seed=3), dcor_matrix(X, 500, seed=3)
    assert np.array_equal(a.values, b.values)
