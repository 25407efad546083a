import json
import math

import numpy as np
import pytest

from wsobolev.exceptions import DegenerateFit, InvalidArgument
from wsobolev.experiments import (
    ExperimentReport,
    ToleranceBook,
    _threshold_from_slopes,
    fit_exponent,
    run_flat_cusp_counterexample,
    run_kernel_threshold,
    run_threshold_sweep,
    svg_loglog,
)

H = 2.0 ** -np.arange(3, 9)


def test_exact_power_law_fit():
    fit = fit_exponent(H, 3 * H**2)
    assert fit.slope == pytest.approx(2.0, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3), abs=1e-12)
    assert fit.stderr < 1e-12


def test_perturbed_power_law_fit():
    assert fit_exponent(H, H**2 * (1 + 0.01 * np.sin(1 / H))).slope == pytest.approx(2.0, abs=0.05)


def test_fit_needs_three_points():
    with pytest.raises(InvalidArgument):
        fit_exponent([0.1, 0.2], [1.0, 2.0])


def test_fit_rejects_constant_abscissae():
    with pytest.raises(DegenerateFit):
        fit_exponent([0.1, 0.1, 0.1], [1.0, 2.0, 3.0])


def test_fit_rejects_nonpositive_data():
    with pytest.raises(InvalidArgument):
        fit_exponent([0.1, 0.2, 0.3], [1.0, 0.0, 2.0])


def test_threshold_from_affine_slopes():
    g = np.arange(-1.05, 3.0, 0.1)
    assert _threshold_from_slopes(g, 1.5 - 2 * g) == pytest.approx(0.75, abs=1e-9)


def test_threshold_ignores_early_cancellation():
    g = np.arange(-1.05, 3.0, 0.1)
    s = np.minimum(2.0, 1.5 - 2 * g)
    s[5] = -3.0  # a spurious sign flip well below the threshold
    assert _threshold_from_slopes(g, s) == pytest.approx(0.75, abs=1e-9)


def test_threshold_absent():
    assert math.isnan(_threshold_from_slopes([0, 1, 2], [1.0, 1.0, 1.0]))


def test_record_relations():
    rep = ExperimentReport("t", {})
    assert rep.add("a", "", 1.05, 1.0, 0.1, "abs").passed
    assert not rep.add("b", "", 1.2, 1.0, 0.1, "rel").passed
    assert rep.add("c", "", 0.5, 1.0, 0.0, "le").passed
    assert rep.add("d", "", 1.5, 1.0, 0.0, "ge").passed
    assert not rep.add("e", "", False, True, 0.0, "true").passed
    assert not rep.add("f", "", math.nan, 1.0, 1.0, "abs").passed
    assert rep.verdict == "fail"


def test_report_json_is_canonical():
    rep = ExperimentReport("t", {"b": 1, "a": [math.inf, 1 / 3]})
    rep.add("x", "anchor", 1 / 3, 0.0, 1.0, "abs")
    rep.add_fit("f", H, H**2)
    data = json.loads(rep.to_json())
    assert data["parameters"]["a"] == ["inf", 0.333333333333]
    assert data["records"][0]["measured"] == 0.333333333333
    assert data["fits"]["f"]["slope"] == 2.0
    assert rep.to_json() == rep.to_json()
    assert list(data) == sorted(data)


def test_tolerance_book():
    book = ToleranceBook({"a": 0.5}, global_tolerance=0.0)
    assert book("a", 1.0) == 0.5
    assert book("b", 1.0) == 0.0
    assert ToleranceBook()("b", 1.0) == 1.0


def test_svg_chart():
    fit = fit_exponent(H, H**2)
    svg = svg_loglog(H, H**2, fit, title="demo")
    assert svg.startswith("<svg") and "slope 2" in svg


def test_flat_cusp_with_only_l2_record():
    rep = run_flat_cusp_counterexample(k_max=0, eps_cut_list=(0.2, 0.1), h=1 / 256)
    assert [r.name for r in rep.records] == ["norm_stable_k0"]
    assert rep.passed


def test_flat_cusp_seminorm_ratio():
    rep = run_flat_cusp_counterexample(k_max=1, eps_cut_list=(0.2, 0.1, 0.05), h=1 / 512)
    ratio = next(r for r in rep.records if r.name == "seminorm_ratio_halving")
    assert ratio.measured == pytest.approx(4.0, rel=0.15)


@pytest.mark.parametrize("l, p, expected", [(2, 2, 0.5), (3, 1, 3.0)])
def test_threshold_examples(l, p, expected):
    rep = run_threshold_sweep(l_list=(l,), p_list=(p,), k_list=(1,))
    rec = next(r for r in rep.records if r.name == f"gamma_star_l{l}_p{p}_k1")
    assert rec.measured == pytest.approx(expected, abs=0.05)


def test_threshold_sweep_needs_gammas():
    with pytest.raises(InvalidArgument):
        run_threshold_sweep(gamma_grid=[])


def test_kernel_threshold_needs_k():
    with pytest.raises(InvalidArgument):
        run_kernel_threshold(k_list=())


def test_reduced_cusp_norm_matches_two_dimensional_grid():
    from wsobolev.experiments import _reduced_cusp_weight
    from wsobolev.geometry import DomainSpec, build_grid_domain
    from wsobolev.measure import WeightField
    from wsobolev.sobolev import sobolev_norm

    u = lambda p: p[:, 0] ** -0.2
    # L2 part: int x^-0.4 2x^2 dx = 2/2.6; derivative part: int 0.04 x^-2.4 2x^2 dx = 0.08/0.6
    exact = math.sqrt(2 / 2.6) + math.sqrt(0.08 / 0.6)
    h = 1 / 128
    band = build_grid_domain(DomainSpec.power_cusp(2), h)
    line = build_grid_domain(DomainSpec.interval(), h)
    n2 = sobolev_norm(u, band, WeightField.constant(band), 1, 2, underflow="drop")
    n1 = sobolev_norm(u, line, _reduced_cusp_weight(line, 2), 1, 2)
    assert n2 == pytest.approx(n1, rel=1e-3)
    assert n1 == pytest.approx(exact, rel=0.01)
