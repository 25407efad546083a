import numpy as np
import pytest
import scipy.sparse as sp

from wsobolev.exceptions import InvalidArgument, NotInSupport
from wsobolev.geometry import DomainSpec, build_grid_domain
from wsobolev.kernel import (
    dirac_representer,
    feature_lipschitz_ratio,
    feature_table_csv,
    kernel_matrix,
    min_norm_interpolant,
    pair_sample,
)
from wsobolev.measure import WeightField
from wsobolev.metric import InnerMetricGraph
from wsobolev.sobolev import SobolevOperator, assemble_operator


def _diag_operator(diag):
    g = build_grid_domain(DomainSpec.interval(), 1 / (len(diag) + 1))
    A = sp.diags(np.asarray(diag, dtype=float)).tocsr()
    n = len(diag)
    return SobolevOperator(g, WeightField.constant(g), 0, A, np.arange(n), np.arange(n))


@pytest.fixture(scope="module")
def cusp_op():
    g = build_grid_domain(DomainSpec.power_cusp(2), 1 / 32)
    w = WeightField.on_grid(g, lambda p: 2 * p[:, 0] ** 2)
    return assemble_operator(g, w, 2, underflow="drop")


def test_identity_operator_kernel_is_identity():
    km = kernel_matrix(_diag_operator([1, 1, 1]), [0, 1, 2])
    np.testing.assert_allclose(km.K, np.eye(3))


def test_diagonal_operator_kernel():
    km = kernel_matrix(_diag_operator([2, 4]), [0, 1])
    np.testing.assert_allclose(km.K, np.diag([0.5, 0.25]))


def test_single_node_representer():
    phi = dirac_representer(_diag_operator([5.0]), 0)
    np.testing.assert_allclose(phi, [0.2])


def test_reproducing_property(cusp_op, rng):
    for x in rng.choice(cusp_op.support, 10, replace=False):
        phi = dirac_representer(cusp_op, x)
        u = rng.standard_normal(cusp_op.size)
        lhs = phi @ (cusp_op.matrix @ u)
        assert abs(lhs - u[cusp_op.local_index(x)]) <= 1e-8 * cusp_op.norm(u)


def test_kernel_is_symmetric_positive_definite(cusp_op, rng):
    nodes = np.sort(rng.choice(cusp_op.support, 50, replace=False))
    km = kernel_matrix(cusp_op, nodes)
    assert km.asymmetry <= 1e-10
    assert km.min_eigenvalue() > 0
    assert km.is_psd()


def test_node_outside_support():
    g = build_grid_domain(DomainSpec.square(), 1 / 8)
    op = assemble_operator(g, WeightField.on_grid(g, lambda p: (p[:, 0] > 0.5).astype(float)), 1)
    outside = int(np.flatnonzero(g.points[:, 0] < 0.5)[0])
    with pytest.raises(NotInSupport):
        dirac_representer(op, outside)


def test_dense_kernel_size_limit(cusp_op):
    with pytest.raises(InvalidArgument):
        kernel_matrix(cusp_op, np.zeros(2001, dtype=int))


def test_min_norm_interpolant_hits_data(cusp_op, rng):
    nodes = np.sort(rng.choice(cusp_op.support, 8, replace=False))
    y = rng.standard_normal(8)
    it = min_norm_interpolant(cusp_op, nodes, y)
    np.testing.assert_allclose(it.values[[cusp_op.local_index(n) for n in nodes]], y, atol=1e-8)
    assert it.norm == pytest.approx(cusp_op.norm(it.values), rel=1e-6)


def test_feature_ratios(cusp_op):
    graph = InnerMetricGraph(cusp_op.domain)
    pairs = pair_sample(cusp_op.domain, 20, seed=1, support=cusp_op.support)
    rows = feature_lipschitz_ratio(cusp_op, graph, pairs)
    assert len(rows) == 20
    assert all(r.ratio > 0 and r.d_X > 0 for r in rows)
    assert feature_table_csv(rows).splitlines()[0] == "x,x_prime,d_X,norm,ratio"


def test_feature_pairs_must_be_distinct(cusp_op):
    graph = InnerMetricGraph(cusp_op.domain)
    n = int(cusp_op.support[0])
    with pytest.raises(InvalidArgument):
        feature_lipschitz_ratio(cusp_op, graph, [[n, n]])


def test_pair_sample_is_seeded(cusp_op):
    a = pair_sample(cusp_op.domain, 30, seed=4)
    b = pair_sample(cusp_op.domain, 30, seed=4)
    np.testing.assert_array_equal(a, b)
    d = np.linalg.norm(cusp_op.domain.points[a[:, 0]] - cusp_op.domain.points[a[:, 1]], axis=1)
    np.testing.assert_allclose(d, cusp_op.domain.h)
