import math

import numpy as np
import pytest

from wsobolev.exceptions import InvalidArgument, NonFiniteValue
from wsobolev.geometry import DomainSpec, build_grid_domain
from wsobolev.metric import (
    InnerMetricGraph,
    cech_norm,
    distance_matrix,
    inner_distance,
    inner_distances_from,
    inner_lipschitz_seminorm,
)


@pytest.fixture(scope="module")
def square16():
    return InnerMetricGraph(build_grid_domain(DomainSpec.square(), 1 / 128, stencil=16))


@pytest.fixture(scope="module")
def flat_cusp():
    return InnerMetricGraph(build_grid_domain(DomainSpec.flat_cusp(eps_cut=0.1), 1 / 512))


def test_square_diagonal(square16):
    d = inner_distance(square16, (0.1, 0.1), (0.9, 0.9))
    assert d == pytest.approx(0.8 * math.sqrt(2), rel=0.05)


def test_graph_distance_overestimates_by_stencil_factor(square16):
    d = inner_distance(square16, (0.1, 0.1), (0.9, 0.3), refine=False)
    e = math.hypot(0.8, 0.2)
    assert e <= d <= 1.03 * e


def test_disjoint_rectangles_are_infinitely_far():
    g = InnerMetricGraph(build_grid_domain(DomainSpec.rectangles([[0, 0.4, 0, 1], [0.6, 1, 0, 1]]), 1 / 16))
    assert g.n_components == 2
    assert math.isinf(inner_distance(g, (0.2, 0.5), (0.8, 0.5)))


def test_lshape_path_through_notch_corner():
    g = InnerMetricGraph(build_grid_domain(DomainSpec.lshape(), 1 / 128, stencil=16))
    d = inner_distance(g, (0.25, 0.75), (0.75, 0.25))
    assert d == pytest.approx(2 * math.hypot(0.25, 0.25), rel=0.05)


def test_distance_symmetric_and_above_euclidean(rng):
    dom = build_grid_domain(DomainSpec.power_cusp(2), 1 / 64, stencil=16)
    g = InnerMetricGraph(dom)
    for a, b in rng.integers(0, dom.n_nodes, size=(50, 2)):
        d = inner_distance(g, a, b)
        assert d == inner_distance(g, b, a)
        assert d >= np.linalg.norm(dom.points[a] - dom.points[b]) - 1e-12


def test_batched_distances_match_single(square16):
    targets = np.array([5, 500, 5000])
    batch = inner_distances_from(square16, 0, targets, refine=False)
    single = [inner_distance(square16, 0, t, refine=False) for t in targets]
    np.testing.assert_allclose(batch, single)


def test_constant_function_has_zero_seminorm(square16):
    assert inner_lipschitz_seminorm(square16, lambda p: np.full(len(p), 3.0)) == 0.0


def test_linear_function_has_unit_seminorm(square16):
    u = lambda p: p[:, 0].copy()  # noqa: E731
    assert inner_lipschitz_seminorm(square16, u) == pytest.approx(1.0)
    assert inner_lipschitz_seminorm(square16, u, mode="AllPairs", k=400) <= 1.0 + 1e-12


def test_flat_cusp_seminorm_of_inverse(flat_cusp):
    assert inner_lipschitz_seminorm(flat_cusp, lambda p: 1 / p[:, 0]) == pytest.approx(100, rel=0.15)


def test_cech_norms(square16, flat_cusp):
    assert cech_norm(square16, lambda p: np.full(len(p), 3.0)) == pytest.approx(3.0)
    assert cech_norm(square16, lambda p: p[:, 0].copy()) == pytest.approx(2.0, rel=1e-2)
    assert cech_norm(flat_cusp, lambda p: 1 / p[:, 0]) == pytest.approx(110, rel=0.15)


def test_nonfinite_values_rejected(square16):
    u = np.zeros(square16.n_nodes)
    u[10] = np.nan
    with pytest.raises(NonFiniteValue):
        inner_lipschitz_seminorm(square16, u)


def test_bad_mode(square16):
    with pytest.raises(InvalidArgument):
        inner_lipschitz_seminorm(square16, np.zeros(square16.n_nodes), mode="Max")


def test_distance_matrix_csv(tmp_path):
    g = InnerMetricGraph(build_grid_domain(DomainSpec.square(), 1 / 8))
    D = distance_matrix(g, [0, 5, 10], path=tmp_path / "d.csv")
    assert np.allclose(D, D.T) and np.all(np.diag(D) == 0)
    assert (tmp_path / "d.csv").read_text().startswith("node,0,5,10")
