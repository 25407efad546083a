import math

import numpy as np
import pytest

from wsobolev.exceptions import AllZeroWeight, InvalidArgument
from wsobolev.geometry import DomainSpec, build_grid_domain
from wsobolev.measure import (
    PushforwardSpec,
    WeightField,
    catalog_specs,
    coarea_check,
    fit_lower_bound,
    monte_carlo_density,
    pushforward_density,
    source_mass,
)

T = np.linspace(0.05, 0.95, 19)


def test_identity_density_is_source_density():
    f = pushforward_density(PushforwardSpec.identity(target=T))
    np.testing.assert_allclose(f.values, 1.0)


def test_project_x_density_is_fiber_length():
    f = pushforward_density(PushforwardSpec.project_x(2, target=[0.5]))
    assert f.values[0] == pytest.approx(0.5, rel=1e-12)


def test_project_x_with_monomial_source():
    f = pushforward_density(PushforwardSpec.project_x(2, density="monomial", a=1.0, target=T))
    np.testing.assert_allclose(f.values, 2 * T**3, rtol=1e-10)


def test_norm_squared_closed_form():
    f = pushforward_density(PushforwardSpec.norm_squared(4, target=T))
    np.testing.assert_allclose(f.values, math.pi**2 * T, rtol=1e-10)


def test_norm_squared_radial_source():
    # xi = |x|^2 = t on the level set, so the density picks up one more power of t
    f = pushforward_density(PushforwardSpec.norm_squared(4, density="radial", a=2.0, target=T))
    np.testing.assert_allclose(f.values, math.pi**2 * T**2, rtol=1e-8)


def test_radial_density_on_annulus():
    r = np.linspace(1.05, 1.95, 10)
    f = pushforward_density(PushforwardSpec.radial(1.0, 2.0, d=2, target=r))
    np.testing.assert_allclose(f.values, 2 * math.pi * r, rtol=1e-10)


def test_coarea_radial_annulus():
    lhs, rhs = coarea_check(PushforwardSpec.radial(1.0, 2.0, d=2), lambda p: np.ones(len(p)), 256)
    assert lhs == pytest.approx(3 * math.pi, rel=1e-8)
    assert rhs == pytest.approx(3 * math.pi, rel=1e-8)


def test_coarea_project_x():
    lhs, rhs = coarea_check(PushforwardSpec.project_x(2), lambda p: np.ones(len(p)), 256)
    assert lhs == pytest.approx(2 / 3, rel=1e-6)
    assert rhs == pytest.approx(2 / 3, rel=1e-6)


def test_coarea_zero_integrand():
    lhs, rhs = coarea_check(PushforwardSpec.norm_squared(4), lambda p: np.zeros(len(p)), 64)
    assert (lhs, rhs) == (0.0, 0.0)


def test_source_mass_of_four_ball():
    assert source_mass(PushforwardSpec.norm_squared(4)) == pytest.approx(math.pi**2 / 2, rel=1e-10)


def test_monte_carlo_identity_bins():
    mc = monte_carlo_density(PushforwardSpec.identity(), 1_000_000, 100, seed=3)
    assert mc.values.min() >= 0.97 and mc.values.max() <= 1.03


def test_monte_carlo_norm_squared_at_half():
    mc = monte_carlo_density(PushforwardSpec.norm_squared(4), 1_000_000, 64, seed=1)
    i = int(np.argmin(np.abs(mc.points[:, 0] - 0.5)))
    assert mc.values[i] == pytest.approx(math.pi**2 * mc.points[i, 0], rel=0.03)


def test_monte_carlo_is_seeded():
    spec = PushforwardSpec.project_x(2)
    a = monte_carlo_density(spec, 20_000, 16, seed=7).values
    b = monte_carlo_density(spec, 20_000, 16, seed=7).values
    np.testing.assert_array_equal(a, b)


@pytest.mark.parametrize("samples", [0, 9_999])
def test_monte_carlo_rejects_small_samples(samples):
    with pytest.raises(InvalidArgument):
        monte_carlo_density(PushforwardSpec.identity(), samples)


def test_catalog_has_four_maps():
    assert sorted(s.map for s in catalog_specs().values()) == ["Identity", "NormSquared", "ProjectX", "Radial"]


def test_spec_json_round_trip():
    spec = PushforwardSpec.radial(1.0, 2.0, d=3, density="radial", a=1.5)
    back = PushforwardSpec.from_json(spec.to_json())
    assert back.to_dict() == spec.to_dict()


def test_lower_bound_of_identity_weight():
    x = np.linspace(0, 1, 1025)[1:-1]
    f = WeightField(x, x, bounds=(0.0, 1.0))
    fit = fit_lower_bound(f)
    assert fit.alpha == pytest.approx(1.0, abs=0.1)
    assert fit.c == pytest.approx(1.0, rel=0.1)
    assert fit.violations == 0


def test_lower_bound_of_constant_weight():
    x = np.linspace(0, 1, 257)[1:-1]
    assert fit_lower_bound(WeightField(x, np.ones_like(x), bounds=(0.0, 1.0))).alpha == pytest.approx(0.0, abs=1e-9)


def test_lower_bound_of_norm_squared_density():
    x = np.linspace(0, 1, 1025)[1:-1]
    f = pushforward_density(PushforwardSpec.norm_squared(4, target=x))
    f.bounds = (0.0, 1.0)
    assert fit_lower_bound(f).alpha == pytest.approx(1.0, abs=0.1)


def test_lower_bound_of_zero_weight():
    x = np.linspace(0.1, 0.9, 9)
    with pytest.raises(AllZeroWeight):
        fit_lower_bound(WeightField(x, np.zeros_like(x), bounds=(0.0, 1.0)))


def test_weight_field_validation_and_csv():
    with pytest.raises(InvalidArgument):
        WeightField([0.1, 0.2], [1.0, -1.0])
    g = build_grid_domain(DomainSpec.square(), 1 / 4)
    w = WeightField.on_grid(g, lambda p: p[:, 0] + p[:, 1])
    back = WeightField.from_csv(w.to_csv())
    np.testing.assert_allclose(back.values, w.values, rtol=1e-11)
    np.testing.assert_allclose(back.points, w.points, rtol=1e-11)


def test_infinite_values_are_excluded():
    w = WeightField([0.1, 0.2, 0.3], [1.0, np.inf, 0.0])
    assert w.infinite.tolist() == [False, True, False]
    assert w.support.tolist() == [True, False, False]
    assert w.finite_values().tolist() == [1.0, 0.0, 0.0]
