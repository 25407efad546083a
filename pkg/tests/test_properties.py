import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from wsobolev.geometry import DomainSpec, build_grid_domain
from wsobolev.measure import PushforwardSpec, pushforward_density
from wsobolev.metric import InnerMetricGraph, inner_distance
from wsobolev.retraction import Retraction, sample_points, semigroup_defect

_LSHAPE = InnerMetricGraph(build_grid_domain(DomainSpec.lshape(), 1 / 16))
_CUSP = Retraction(DomainSpec.power_cusp(2))
_CUSP_PTS = sample_points(_CUSP.spec, 64, 5)


@st.composite
def offset_sets(draw):
    order = draw(st.integers(0, 3))
    offs = draw(st.lists(st.integers(-4, 4), min_size=order + 1, max_size=7, unique=True))
    return order, sorted(offs)


@given(offset_sets())
def test_stencil_is_exact_on_low_degree_monomials(case):
    from wsobolev.sobolev import difference_stencil

    order, offs = case
    st_ = difference_stencil(order, offs)
    scale = max(1.0, float(np.abs(st_.coefficients).sum()))
    assert st_.moment_errors().max() <= 1e-9 * scale


_nodes = st.integers(0, _LSHAPE.n_nodes - 1)


@settings(max_examples=40, deadline=None)
@given(_nodes, _nodes, _nodes)
def test_inner_distance_is_a_metric(i, j, k):
    pts = _LSHAPE.domain.points
    a, b, c = pts[i], pts[j], pts[k]
    dab = inner_distance(_LSHAPE, a, b)
    assert dab == inner_distance(_LSHAPE, b, a)
    assert dab >= np.linalg.norm(a - b) - 1e-12
    assert (dab == 0) == (i == j)
    assert dab <= inner_distance(_LSHAPE, a, c) + inner_distance(_LSHAPE, c, b) + 1e-12


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(["identity", "project_x", "norm_squared", "radial"]), st.floats(0.0, 2.0))
def test_pushforward_density_is_nonnegative(kind, a):
    spec = getattr(PushforwardSpec, kind)(density="monomial" if kind in ("identity", "project_x") else "radial", a=a)
    lo, hi = spec.image
    spec = spec.with_target(np.linspace(lo, hi, 11)[1:-1])
    vals = pushforward_density(spec, 16).values
    assert np.isfinite(vals).all() and (vals >= 0).all()


@given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
def test_retraction_semigroup(s1, s2):
    assert semigroup_defect(_CUSP, s1, s2, _CUSP_PTS) <= 4 * math.ulp(1.0)
