import json
import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.optimize import brentq

from wsobolev.exceptions import EmptyDomain, EmptySlice, InvalidArgument
from wsobolev.geometry import DomainSpec, build_grid_domain, sphere_slice


def test_square_half_spacing_has_single_centre_node():
    g = build_grid_domain(DomainSpec.square(), 0.5)
    assert g.n_nodes == 1
    np.testing.assert_allclose(g.points[0], [0.5, 0.5])


def test_power_cusp_quarter_spacing_enumeration():
    g = build_grid_domain(DomainSpec.power_cusp(2), 0.25)
    xs = np.round(g.points[:, 0], 12)
    assert g.n_nodes == 7
    assert [int((xs == v).sum()) for v in (0.25, 0.5, 0.75)] == [1, 1, 5]


def test_power_cusp_unit_spacing_is_empty():
    with pytest.raises(EmptyDomain):
        build_grid_domain(DomainSpec.power_cusp(2), 1.0)


@pytest.mark.parametrize(
    "spec, exact",
    [
        (DomainSpec.square(), 1.0),
        (DomainSpec.interval(), 1.0),
        (DomainSpec.power_cusp(2), 2 / 3),
        (DomainSpec.power_cusp(3), 0.5),
        (DomainSpec.disk(), math.pi),
    ],
)
def test_total_volume_matches_area(spec, exact):
    g = build_grid_domain(spec, 1 / 128)
    assert g.total_volume == pytest.approx(exact, rel=2e-2)


def test_flat_cusp_volume_against_quadrature():
    exact = quad(lambda x: 2 * math.exp(-1 / x**2), 0, 1)[0]
    g = build_grid_domain(DomainSpec.flat_cusp(), 1 / 256)
    assert g.total_volume == pytest.approx(exact, rel=1e-2)


def test_flat_cusp_keeps_nodes_close_to_the_tip():
    g = build_grid_domain(DomainSpec.flat_cusp(eps_cut=0.025), 1 / 1024)
    assert g.points[:, 0].min() < 0.026


def test_adjacency_edges_have_euclidean_length():
    g = build_grid_domain(DomainSpec.disk(), 1 / 16, stencil=16)
    e, lengths = g.adjacency
    np.testing.assert_allclose(lengths, np.linalg.norm(g.points[e[:, 0]] - g.points[e[:, 1]], axis=1))
    assert set(np.round(lengths * 16, 6)) <= {1.0, round(math.sqrt(2), 6), round(math.sqrt(5), 6)}


def test_node_index_requires_lattice_point():
    g = build_grid_domain(DomainSpec.square(), 1 / 4)
    i = g.node_index((0.25, 0.5))
    np.testing.assert_allclose(g.points[i], [0.25, 0.5])
    with pytest.raises(KeyError):
        g.node_index((0.1, 0.1))
    assert g.nearest_node((0.26, 0.49)) == i


def test_spec_round_trip_through_json():
    spec = DomainSpec.power_cusp(3, eps_cut=0.1)
    back = DomainSpec.from_json(spec.to_json())
    assert back == spec
    assert json.loads(spec.to_json())["kind"] == "PowerCusp"


@pytest.mark.parametrize("bad", [dict(kind="Blob"), dict(kind="PowerCusp", params={"l": 0.5})])
def test_invalid_specs_rejected(bad):
    with pytest.raises(InvalidArgument):
        DomainSpec(**bad)


def test_disk_slice_is_full_circle():
    g = build_grid_domain(DomainSpec.disk(), 1 / 32)
    sl = sphere_slice(g, 0.5)
    assert sl.total_weight == pytest.approx(math.pi, rel=1e-9)


def test_cusp_slice_arc_length():
    eta = 0.5
    theta = brentq(lambda t: eta * math.sin(t) - (eta * math.cos(t)) ** 2, 0, math.pi / 2)
    g = build_grid_domain(DomainSpec.power_cusp(2), 1 / 64)
    assert sphere_slice(g, eta).total_weight == pytest.approx(2 * eta * theta, rel=1e-6)


def test_slice_outside_domain_is_empty():
    g = build_grid_domain(DomainSpec.square(), 1 / 8)
    with pytest.raises(EmptySlice):
        sphere_slice(g, 2.0)
