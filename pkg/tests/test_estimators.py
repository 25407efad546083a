import numpy as np
import pytest
from sklearn.base import clone

from wsobolev.estimators import DiracFeatureMap, KernelInterpolator, check_points
from wsobolev.exceptions import InvalidArgument
from wsobolev.geometry import DomainSpec


def test_check_points_validates_shape():
    assert check_points([[0.1, 0.2]], 2).shape == (1, 2)
    with pytest.raises(InvalidArgument):
        check_points([[0.1, 0.2, 0.3]], 2)
    with pytest.raises(ValueError):
        check_points([[np.nan, 0.2]], 2)


def test_params_round_trip():
    est = DiracFeatureMap(domain=DomainSpec.power_cusp(2), h=1 / 16, k=2)
    assert clone(est).get_params()["k"] == 2
    est.set_params(k=1)
    assert est.k == 1


def test_feature_map_reproduces_kernel():
    fm = DiracFeatureMap(domain="Square", h=1 / 16, k=2).fit()
    X = np.array([[0.25, 0.25], [0.5, 0.75], [0.8, 0.1]])
    F = fm.transform(X)
    K = F @ fm.operator_.matrix @ F.T
    np.testing.assert_allclose(K, fm.kernel(X), rtol=1e-8, atol=1e-12)
    np.testing.assert_allclose(K, K.T, atol=1e-12)


def test_interpolator_fits_training_data():
    X = np.array([[0.25, 0.25], [0.5, 0.75], [0.75, 0.5], [0.125, 0.875]])
    y = np.array([1.0, -2.0, 0.5, 3.0])
    model = KernelInterpolator(domain={"kind": "Square"}, h=1 / 16, k=2).fit(X, y)
    np.testing.assert_allclose(model.predict(X), y, atol=1e-8)
    assert model.score(X, y) == pytest.approx(1.0)


def test_interpolator_rejects_colliding_samples():
    X = np.array([[0.25, 0.25], [0.251, 0.251]])
    with pytest.raises(InvalidArgument):
        KernelInterpolator(h=1 / 8).fit(X, [0.0, 1.0])
