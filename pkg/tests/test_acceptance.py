"""End-to-end acceptance checks; one summary line per criterion is printed at the end of the run."""
import filecmp
import io
import json
import re
import time
from contextlib import redirect_stdout

import pytest

from conftest import ACCEPTANCE_LINES
from wsobolev.cli import ALL_ORDER, main
from wsobolev.experiments import run_suite

pytestmark = pytest.mark.acceptance


@pytest.fixture(scope="module")
def suites():
    out = {}
    for name in ALL_ORDER:
        t0 = time.perf_counter()
        rep = run_suite(name)
        out[name] = (rep, time.perf_counter() - t0)
    return out


def _records(rep, pattern):
    rx = re.compile(pattern)
    recs = [r for r in rep.records if rx.fullmatch(r.name)]
    assert recs, f"no records match {pattern}"
    return recs


def _report(number, title, checks, detail=""):
    """Log one line for criterion ``number`` and fail the test when any check fails."""
    bad = [name for name, ok in checks if not ok]
    status = "PASS" if not bad else "FAIL"
    line = f"criterion {number:>3} {status}: {title}"
    if detail:
        line += f" [{detail}]"
    if bad:
        line += " failing: " + ", ".join(bad)
    ACCEPTANCE_LINES[number] = line
    print(line)
    assert not bad, line


def _all(rep, pattern):
    return [(r.name, r.passed) for r in _records(rep, pattern)]


def test_criterion_01_coarea(suites):
    rep, seconds = suites["coarea"]
    _report("1", "coarea identity for every catalog map and test integrand",
            _all(rep, r"coarea_.*") + [("runtime", seconds < 10)], f"{seconds:.1f} s")


def test_criterion_02_vanishing_density(suites):
    rep, _ = suites["coarea"]
    slope = _records(rep, "vanishing_exponent")[0].measured
    _report("2", "norm-squared push-forward density vanishes linearly at 0",
            _all(rep, r"norm_squared_(closed_form|oracle)|vanishing_exponent"), f"exponent {slope:.3f}")


def test_criterion_03_flat_cusp(suites):
    rep, seconds = suites["flat-cusp"]
    slope = _records(rep, "seminorm_slope")[0].measured
    _report("3", "flat cusp: stable Sobolev norms, blowing-up Lipschitz seminorm",
            _all(rep, r"norm_stable_k[1-4]|seminorm_slope") + [("runtime", seconds < 60)],
            f"slope {slope:.3f}, {seconds:.1f} s")


def test_criterion_04_thresholds(suites):
    rep, _ = suites["thresholds"]
    _report("4", "power-cusp thresholds and p-independent exponent",
            _all(rep, r"gamma_star_l\d_p\d_k\d|beta_min_l\d"))


def test_criterion_05_slice_lemma_p2_p4(suites):
    rep, _ = suites["slice-lemma"]
    _report("5a", "slice lemma ratios and slopes for p in {2, 4}", _all(rep, r"(ratio_spread|slice_slope)_l2_p[24]"))


@pytest.mark.xfail(strict=True, reason="for p = 1 the slice ratio decays like eta^2 and its spread exceeds 20")
def test_criterion_05_slice_lemma_p1(suites):
    rep, _ = suites["slice-lemma"]
    spread = _records(rep, "ratio_spread_l2_p1")[0].measured
    _report("5b", "slice lemma ratios and slopes for p = 1", _all(rep, r"(ratio_spread|slice_slope)_l2_p1"),
            f"spread {spread:.4g}")


def test_criterion_06_morrey(suites):
    rep, _ = suites["morrey"]
    _report("6", "Morrey shell measures and fitted weight exponent", _all(rep, r"shell_measure_l\d_i\d|alpha_l\d"))


def test_criterion_07_kernel(suites):
    rep, _ = suites["kernel"]
    _report("7", "kernel reproduces point values and is positive definite on distinct nodes",
            _all(rep, r"reproducing|kernel_(symmetry|psd|definite)"))


def test_criterion_08_kernel_threshold(suites):
    rep, _ = suites["kernel-threshold"]
    _report("8", "Lipschitz embedding order on the square and on cusps",
            _all(rep, r"square_k2_growth|flat_cusp_no_admissible_k|k_emp_monotone"))


def test_criterion_09_retraction(suites):
    rep, _ = suites["retraction"]
    _report("9", "retraction Jacobian and density-comparison bounds",
            _all(rep, r"jacobian_(C|nu)|lipschitz_C|density_(nu|C)_a.*|flat_density_no_fit"))


def test_criterion_10_geodesic(suites):
    rep, _ = suites["geodesic"]
    _report("10", "inner metric is Euclidean on convex sets and satisfies the axioms",
            _all(rep, r"convex_ratio_.*|symmetry_.*|triangle_.*|euclidean_lower_.*"))


def test_criterion_11_determinism(suites, tmp_path):
    first, second = tmp_path / "a", tmp_path / "b"
    t0 = time.perf_counter()
    with redirect_stdout(io.StringIO()):
        main(["verify", "all", "--out", str(first)])
    seconds = time.perf_counter() - t0
    checks = [("runtime", seconds < 600)]
    for name in ALL_ORDER:
        checks.append((f"{name}.json", (first / f"{name}.json").read_text() == suites[name][0].to_json()))
    # the in-process runs above count as the second execution; replay one suite to compare whole files too
    with redirect_stdout(io.StringIO()):
        main(["verify", "retraction", "--out", str(second)])
    checks.append(("retraction.csv", filecmp.cmp(first / "retraction.csv", second / "retraction.csv", shallow=False)))
    summary = json.loads((first / "summary.json").read_text())
    checks.append(("summary", sorted(summary) == sorted(ALL_ORDER)))
    _report("11", "verify all is byte-identical across runs and finishes in time", checks, f"{seconds:.0f} s")
