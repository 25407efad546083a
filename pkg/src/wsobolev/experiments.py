"""End-to-end verification suites with deterministic JSON reports."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import linregress

from .exceptions import DegenerateFit, InvalidArgument, NoFitFound
from .geometry import DomainSpec, build_grid_domain
from .kernel import feature_lipschitz_ratio, kernel_matrix, pair_sample, _solver
from .measure import (
    PushforwardSpec,
    WeightField,
    catalog_specs,
    coarea_check,
    fit_lower_bound,
    monte_carlo_density,
    pushforward_density,
    source_mass,
)
from .metric import InnerMetricGraph, inner_distance, inner_distances_from, inner_lipschitz_seminorm
from .retraction import (
    Retraction,
    check_density_comparison,
    check_jacobian_bounds,
    check_lipschitz_cs,
    check_partial_s,
    check_partial_t,
    inverse_defect,
    sample_points,
    semigroup_defect,
)
from .sobolev import (
    assemble_operator,
    integrated_slice_norm,
    lp_norm,
    slice_lemma_ratio,
    sobolev_levels,
)

SIG = 12


# -- fitting -----------------------------------------------------------------

@dataclass(frozen=True)
class ExponentFit:
    slope: float
    intercept: float
    stderr: float
    n: int

    def ci95(self):
        from scipy.stats import t as student

        if self.n <= 2:
            return (self.slope, self.slope)
        half = float(student.ppf(0.975, self.n - 2)) * self.stderr
        return (self.slope - half, self.slope + half)

    def to_dict(self):
        lo, hi = self.ci95()
        return {"slope": self.slope, "intercept": self.intercept, "stderr": self.stderr, "n": self.n, "ci95": [lo, hi]}


def fit_exponent(xs, ys):
    """Least-squares line through ``(log x, log y)``: ``(slope, intercept, stderr)``."""
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if len(xs) != len(ys):
        raise InvalidArgument("xs and ys differ in length")
    if len(xs) < 3:
        raise InvalidArgument("at least 3 points are needed for an exponent fit")
    if (xs <= 0).any() or (ys <= 0).any() or not (np.isfinite(xs).all() and np.isfinite(ys).all()):
        raise InvalidArgument("exponent fits need positive finite data")
    lx, ly = np.log(xs), np.log(ys)
    if np.ptp(lx) == 0:
        raise DegenerateFit("all abscissae coincide")
    r = linregress(lx, ly)
    return ExponentFit(float(r.slope), float(r.intercept), float(r.stderr), len(xs))


# -- reports -----------------------------------------------------------------

RELATIONS = ("abs", "rel", "le", "ge", "true")


class ToleranceBook:
    """Per-record tolerance overrides plus an optional global override."""

    def __init__(self, overrides=None, global_tolerance=None):
        self.overrides = dict(overrides or {})
        self.global_tolerance = global_tolerance

    def __call__(self, name, default):
        if name in self.overrides:
            return float(self.overrides[name])
        if self.global_tolerance is not None:
            return float(self.global_tolerance)
        return float(default)


@dataclass
class Record:
    name: str
    anchor: str
    measured: object
    expected: object
    tolerance: float
    relation: str
    inputs: dict = field(default_factory=dict)

    @property
    def passed(self):
        m, e, t = self.measured, self.expected, self.tolerance
        if self.relation == "true":
            return bool(m)
        if m is None or (isinstance(m, float) and math.isnan(m)):
            return False
        if self.relation == "abs":
            return bool(abs(m - e) <= t)
        if self.relation == "rel":
            return bool(abs(m - e) <= t * abs(e))
        if self.relation == "le":
            return bool(m <= e + t)
        if self.relation == "ge":
            return bool(m >= e - t)
        raise InvalidArgument(f"unknown relation {self.relation!r}")

    def to_dict(self):
        return {
            "name": self.name,
            "anchor": self.anchor,
            "inputs": self.inputs,
            "measured": self.measured,
            "expected": self.expected,
            "tolerance": self.tolerance,
            "relation": self.relation,
            "pass": self.passed,
        }


@dataclass
class ExperimentReport:
    name: str
    parameters: dict
    records: list = field(default_factory=list)
    fits: dict = field(default_factory=dict)
    series: dict = field(default_factory=dict)

    def add(self, name, anchor, measured, expected, tolerance, relation, **inputs):
        if relation not in RELATIONS:
            raise InvalidArgument(f"relation must be one of {RELATIONS}")
        rec = Record(name, anchor, measured, expected, tolerance, relation, inputs)
        self.records.append(rec)
        return rec

    def add_fit(self, name, xs, ys):
        fit = fit_exponent(xs, ys)
        self.fits[name] = fit
        self.series[name] = (list(map(float, xs)), list(map(float, ys)))
        return fit

    @property
    def passed(self):
        return all(r.passed for r in self.records)

    @property
    def verdict(self):
        return "pass" if self.passed else "fail"

    def to_dict(self):
        return {
            "name": self.name,
            "parameters": self.parameters,
            "records": [r.to_dict() for r in self.records],
            "fits": {k: v.to_dict() for k, v in self.fits.items()},
            "verdict": self.verdict,
        }

    def to_json(self):
        return json.dumps(_clean(self.to_dict()), sort_keys=True, indent=2) + "\n"

    def records_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "anchor", "measured", "expected", "tolerance", "relation", "pass"])
        for r in self.records:
            d = _clean(r.to_dict())
            w.writerow([d["name"], d["anchor"], d["measured"], d["expected"], d["tolerance"], d["relation"], d["pass"]])
        return buf.getvalue()

    def svg_charts(self):
        return {name: svg_loglog(*self.series[name], fit, title=name) for name, fit in self.fits.items()}


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return float(f"{x:.{SIG}g}")


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple, np.ndarray)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_, int, np.integer, float, np.floating)):
        return _fmt(obj)
    return obj


def svg_loglog(xs, ys, fit=None, title="", width=480, height=320):
    """Self-contained SVG of a log-log scatter with the fitted line."""
    lx, ly = np.log10(np.asarray(xs, dtype=float)), np.log10(np.asarray(ys, dtype=float))
    pad = 48
    x0, x1 = lx.min(), lx.max()
    y0, y1 = ly.min(), ly.max()
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1

    def px(v):
        return pad + (v - x0) / (x1 - x0) * (width - 2 * pad)

    def py(v):
        return height - pad - (v - y0) / (y1 - y0) * (height - 2 * pad)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle">{title}</text>',
        f'<text x="{pad}" y="{height - 12}">log10 x: {x0:.3g} .. {x1:.3g}</text>',
        f'<text x="8" y="{pad - 8}">log10 y: {y0:.3g} .. {y1:.3g}</text>',
    ]
    for a, b in zip(lx, ly):
        parts.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="3" fill="steelblue"/>')
    if fit is not None:
        ln10 = math.log(10)
        fa = (fit.intercept + fit.slope * x0 * ln10) / ln10
        fb = (fit.intercept + fit.slope * x1 * ln10) / ln10
        parts.append(
            f'<line x1="{px(x0):.2f}" y1="{py(fa):.2f}" x2="{px(x1):.2f}" y2="{py(fb):.2f}" stroke="firebrick"/>'
        )
        parts.append(f'<text x="{width - pad}" y="{pad}" text-anchor="end">slope {fit.slope:.4g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def _book(tol):
    return tol if isinstance(tol, ToleranceBook) else ToleranceBook(global_tolerance=tol)


# -- helpers -----------------------------------------------------------------

def _reduced_cusp_weight(domain, l):
    """Fiber length ``2 x**l`` of the band over each node, from the push-forward quadrature."""
    spec = PushforwardSpec.project_x(l, target=domain.points[:, 0])
    f = pushforward_density(spec, 8)
    return WeightField(domain.points, f.values, "Coarea", domain=domain, evaluator=lambda p: 2 * np.abs(p[:, 0]) ** l)


def _bump(eps):
    return lambda p: np.clip(1 - np.linalg.norm(p, axis=1) / eps, 0, None)


# -- suites ------------------------------------------------------------------

def run_flat_cusp_counterexample(k_max=4, p=2, eps_cut_list=(0.2, 0.1, 0.05, 0.025), h=1 / 1024, tol=None):
    """Finite Sobolev norms of ``1/x`` on the flat cusp against a diverging Lipschitz seminorm."""
    tol = _book(tol)
    eps = sorted((float(e) for e in eps_cut_list), reverse=True)
    if len(eps) < 2:
        raise InvalidArgument("at least two truncations are needed")
    if k_max < 0:
        raise InvalidArgument("k_max must be >= 0")
    rep = ExperimentReport(
        "flat-cusp", {"k_max": k_max, "p": p, "eps_cut_list": eps, "h": h}
    )
    u = lambda pts: 1.0 / pts[:, 0]  # noqa: E731
    levels, semis = [], []
    for e in eps:
        dom = build_grid_domain(DomainSpec.flat_cusp(eps_cut=e), h, stencil=8)
        one = WeightField.constant(dom)
        levels.append(sobolev_levels(u, dom, one, k_max, p, underflow="drop"))
        if k_max >= 1 or len(eps) >= 3:
            semis.append(inner_lipschitz_seminorm(InnerMetricGraph(dom), u))
    levels = np.array(levels)
    for k in range(k_max + 1):
        norms = levels[:, : k + 1].sum(axis=1)
        change = abs(norms[-1] - norms[-2]) / norms[-2]
        rep.add(
            f"norm_stable_k{k}", "u in W^{k,2} of the flat cusp for every k",
            float(change), 0.0, tol(f"norm_stable_k{k}", 0.01), "abs",
            k=k, norms=[float(v) for v in norms],
        )
    if k_max >= 1:
        fit = rep.add_fit("seminorm_vs_eps", eps, semis)
        rep.add(
            "seminorm_slope", "1/x is not inner Lipschitz on the flat cusp",
            fit.slope, -2.0, tol("seminorm_slope", 0.1), "abs",
            seminorms=[float(s) for s in semis],
        )
        if 0.1 in eps and 0.05 in eps:
            ratio = semis[eps.index(0.05)] / semis[eps.index(0.1)]
            rep.add("seminorm_ratio_halving", "inverse-square growth of the seminorm", ratio, 4.0,
                    tol("seminorm_ratio_halving", 0.15), "rel")
    return rep


def _threshold_from_slopes(gammas, slopes, window=6):
    """Root of the slope curve at its last sign change from positive to nonpositive.

    Past the threshold the increments are dominated by the singular part
    and the slope is affine in ``gamma``; a line through up to ``window``
    of those points is extrapolated to zero. Just below it the smooth
    discretization error can cancel the singular part and push the
    observed sign change right, so the root may sit up to three grid steps
    left of the bracket. ``nan`` if there is no sign change.
    """
    g = np.asarray(gammas, dtype=float)
    s = np.asarray(slopes, dtype=float)
    ok = np.isfinite(s) | (s == math.inf)
    g, s = g[ok], s[ok]
    last = None
    for i in range(1, len(g)):
        if s[i - 1] > 0 >= s[i]:
            last = i
    if last is None:
        return math.nan
    branch = [last]
    while len(branch) < window and branch[-1] + 1 < len(g) and s[branch[-1] + 1] <= 0:
        branch.append(branch[-1] + 1)
    if len(branch) >= 2:
        slope, icpt = np.polyfit(g[branch], s[branch], 1)
        root = -icpt / slope
        step = g[last] - g[last - 1]
        if g[last - 1] - 3 * step <= root <= g[last] + 1e-9:
            return float(root)
    i = last
    return float(g[i - 1] + s[i - 1] / (s[i - 1] - s[i]) * (g[i] - g[i - 1]))


def threshold_slopes(l, p, k_list, gamma_grid, h_list):
    """Log-log slope of refinement increments of ``sum_{i<=k} ||D^i x^-gamma||^p``.

    Positive slopes mean the increments shrink under refinement (finite
    norm); nonpositive slopes mean divergence.
    """
    k_max = max(k_list)
    doms = [build_grid_domain(DomainSpec.interval(), h) for h in h_list]
    weights = [_reduced_cusp_weight(d, l) for d in doms]
    out = {k: [] for k in k_list}
    for gamma in gamma_grid:
        u = lambda pts, g=gamma: np.abs(pts[:, 0]) ** (-g)  # noqa: E731
        powers = np.array([[lv**p for lv in sobolev_levels(u, d, w, k_max, p)] for d, w in zip(doms, weights)])
        for k in k_list:
            S = powers[:, : k + 1].sum(axis=1)
            inc = np.abs(np.diff(S))
            scale = np.abs(S).max()
            if (inc <= 1e-13 * scale).all():
                out[k].append(math.inf)
                continue
            if (inc <= 0).any() or not np.isfinite(inc).all():
                out[k].append(math.nan)
                continue
            out[k].append(fit_exponent(h_list[:-1], inc).slope)
    return out


def run_threshold_sweep(l_list=(2, 3, 5), p_list=(1, 2, 3), k_list=(1, 2), gamma_grid=None,
                        h=1 / 1024, levels=4, tol=None):
    """Empirical finiteness thresholds of ``x**-gamma`` on power cusps.

    The cusp norm of a function of ``x`` alone equals the norm on ``(0, 1)``
    weighted by the fiber length ``2 x**l``; the sweep runs on that
    reduction over ``levels`` dyadic grids ending at ``h``.
    """
    tol = _book(tol)
    if gamma_grid is None:
        gamma_grid = np.round(np.arange(-2.05, 7.0, 0.1), 10)
    gamma_grid = np.sort(np.asarray(gamma_grid, dtype=float))
    if len(gamma_grid) == 0:
        raise InvalidArgument("gamma_grid is empty")
    if not k_list:
        raise InvalidArgument("k_list is empty")
    if levels < 4:
        raise InvalidArgument("at least 4 refinement levels are needed")
    h_list = [h * 2.0**j for j in range(levels - 1, -1, -1)]
    ks = sorted(set(int(k) for k in k_list) | {0})
    rep = ExperimentReport(
        "thresholds",
        {"l_list": list(l_list), "p_list": list(p_list), "k_list": list(k_list), "h_list": h_list,
         "gamma_grid": [float(g) for g in gamma_grid]},
    )
    for l in l_list:
        betas = []
        for p in p_list:
            slopes = threshold_slopes(l, p, ks, gamma_grid, h_list)
            gstar = {k: _threshold_from_slopes(gamma_grid, slopes[k]) for k in ks}
            for k in k_list:
                rep.add(
                    f"gamma_star_l{l}_p{p}_k{k}", "finiteness threshold of x^-gamma on the cusp |y| < x^l",
                    gstar[k], (l + 1) / p - k, tol(f"gamma_star_l{l}_p{p}_k{k}", 0.05), "abs", l=l, p=p, k=k,
                )
            vals = [gstar[k] for k in sorted(k_list)]
            mono = all(a >= b - 1e-9 for a, b in zip(vals, vals[1:]))
            rep.add(f"gamma_star_monotone_l{l}_p{p}", "larger k never raises the threshold", mono, True, 0.0,
                    "true", gamma_stars=vals)
            g0, g1 = gstar[0], gstar.get(1, math.nan)
            if 1 not in slopes:
                g1 = _threshold_from_slopes(gamma_grid, threshold_slopes(l, p, [1], gamma_grid, h_list)[1])
            beta = p * g0 / g1 - p if g1 > 0.05 else math.inf
            betas.append(beta)
            name = f"beta_emp_l{l}_p{p}"
            anchor = "integrability gain of the monomial family"
            if l + 1 > p:
                rep.add(name, anchor, beta, p * (l + 1) / (l + 1 - p) - p, tol(name, 0.1), "ge", l=l, p=p)
            else:
                rep.add(name, anchor, math.isinf(beta), True, 0.0, "true", l=l, p=p, beta=beta)
        rep.add(f"beta_min_l{l}", "a p-independent gain exponent exists", float(min(betas)), 1.0 / l,
                tol(f"beta_min_l{l}", 0.05), "ge", l=l)
    return rep


def run_slice_lemma(l_list=(2,), p_list=(1, 2, 4), eta_range=(2.0**-8, 2.0**-2), h=1 / 512, n_eta=7,
                    bump_radius=0.5, tol=None):
    """Slice norms of a bump against the slice bound on power cusps."""
    tol = _book(tol)
    lo, hi = eta_range
    etas = np.geomspace(lo, hi, n_eta)
    rep = ExperimentReport(
        "slice-lemma",
        {"l_list": list(l_list), "p_list": list(p_list), "eta_range": [lo, hi], "n_eta": n_eta, "h": h,
         "bump_radius": bump_radius},
    )
    u = _bump(bump_radius)
    for l in l_list:
        dom = build_grid_domain(DomainSpec.power_cusp(l), h)
        one = WeightField.constant(dom)
        for p in p_list:
            rows = slice_lemma_ratio(dom, one, u, p, etas)
            ratios = np.array([r.ratio for r in rows])
            norms = np.array([r.slice_norm for r in rows])
            a = min(dom.dim, p)
            spread = float(ratios.max() / ratios.min())
            rep.add(f"ratio_spread_l{l}_p{p}", "slice norms are bounded by the slice bound",
                    spread, 20.0, tol(f"ratio_spread_l{l}_p{p}", 0.0), "le", l=l, p=p,
                    ratios=[float(r) for r in ratios])
            fit = rep.add_fit(f"slice_norm_l{l}_p{p}", etas, norms)
            rep.add(f"slice_slope_l{l}_p{p}", "decay of slice norms toward the tip",
                    fit.slope, (a - 1) / p, tol(f"slice_slope_l{l}_p{p}", 0.1), "ge", l=l, p=p)
            whole = lp_norm(u, one, p, domain=dom)
            sliced = integrated_slice_norm(dom, one, u, p, 1.0)
            rep.add(f"slice_integral_l{l}_p{p}", "integrating slice norms recovers the L^p norm",
                    float(max(whole / sliced, sliced / whole)), 2.0, tol(f"slice_integral_l{l}_p{p}", 0.0), "le")
    return rep


def morrey_shells(f, i_max=8):
    """Lebesgue measure and minimum of ``f`` on the shells ``2^-i <= d <= 2^(1-i)``."""
    d = np.minimum(f.points[:, 0] - f.bounds[0], f.bounds[1] - f.points[:, 0])
    vol = f.domain.cell_volume
    out = []
    for i in range(1, i_max + 1):
        sel = (d >= 2.0**-i) & (d <= 2.0 ** (1 - i))
        out.append((i, float(vol[sel].sum()), float(f.values[sel].min()) if sel.any() else math.nan))
    return out


def run_morrey_sup(l_list=(2, 3), p_list=(1, 2, 3, 4, 6, 8), h=1 / 1024, i_max=8, gamma=1.0,
                   eps_cut_list=(0.1, 0.05, 0.025, 0.0125, 0.00625), slope_floor=0.1, tol=None):
    """Shell estimates for ``f = 2 x**l`` and the sup bound on the monomial family.

    For ``u = 1/x`` on the cusp ``|y| < x**l`` the ratio of ``sup |u|`` to
    the ``W^{1,p}`` norm under truncation at ``eps`` grows like a negative
    power of ``eps`` unless ``p >= l + 1``.
    """
    tol = _book(tol)
    rep = ExperimentReport(
        "morrey",
        {"l_list": list(l_list), "p_list": list(p_list), "h": h, "i_max": i_max, "gamma": gamma,
         "eps_cut_list": list(eps_cut_list), "slope_floor": slope_floor},
    )
    for l in l_list:
        dom = build_grid_domain(DomainSpec.interval(), h)
        f = _reduced_cusp_weight(dom, l)
        f.bounds = (0.0, 1.0)
        shells = morrey_shells(f, i_max)
        C = max(mu * 2.0**i for i, mu, _ in shells)
        for i, mu, _ in shells:
            rep.add(f"shell_measure_l{l}_i{i}", "shell measure decays like 2^-i", mu, 4 * 2.0**-i,
                    tol(f"shell_measure_l{l}_i{i}", 0.0), "le", l=l, i=i)
        rep.add(f"shell_constant_l{l}", "shell measure decays like 2^-i", C, 4.0, tol(f"shell_constant_l{l}", 0.0),
                "le", l=l)
        fit = fit_lower_bound(f)
        rep.add(f"alpha_l{l}", "density lower bound near the frontier", fit.alpha, float(l), tol(f"alpha_l{l}", 0.2),
                "abs", l=l, c=fit.c)
        ii = np.array([i for i, _, m in shells if m > 0])
        mins = np.array([m for _, _, m in shells if m > 0])
        rep.add_fit(f"shell_min_f_l{l}", 2.0**-ii, mins)

        # sup of u over the truncated interval against its W^{1,p} norm; a
        # bounded ratio has a fitted slope in eps of at least -slope_floor
        eps = sorted(eps_cut_list, reverse=True)
        smallest = None
        for p in p_list:
            slopes = {}
            for label, u in (("smooth", lambda x: np.cos(x[:, 0])), ("monomial", lambda x, g=gamma: x[:, 0] ** (-g))):
                ratios = []
                for e in eps:
                    d_e = build_grid_domain(DomainSpec.interval(eps_cut=e), h)
                    w = _reduced_cusp_weight(d_e, l)
                    norm = sum(sobolev_levels(u, d_e, w, 1, p))
                    ratios.append(float(np.max(np.abs(u(d_e.points)))) / norm)
                slopes[label] = fit_exponent(eps, ratios).slope
            name = f"sup_bound_smooth_l{l}_p{p}"
            rep.add(name, "bounded functions satisfy the sup bound", slopes["smooth"], -slope_floor, tol(name, 0.0),
                    "ge", l=l, p=p)
            if slopes["monomial"] >= -slope_floor and smallest is None:
                smallest = p
            rep.add(f"sup_ratio_slope_l{l}_p{p}", "sup of x^-gamma against its W^{1,p} norm", True, True, 0.0,
                    "true", l=l, p=p, slope=slopes["monomial"], bounded=slopes["monomial"] >= -slope_floor)
        name = f"sup_bound_smallest_p_l{l}"
        rep.add(name, "smallest p with a sup bound on the monomial family",
                math.nan if smallest is None else float(smallest), float(l + 1), tol(name, 0.0), "abs")
    return rep


def kernel_growth(spec, k, h_pair, n_pairs=400, seed=0, weight=None):
    """Max feature-Lipschitz ratio on axis-neighbour pairs at two grid levels."""
    out = []
    for h in h_pair:
        dom = build_grid_domain(spec, h)
        w = WeightField.constant(dom) if weight is None else WeightField.on_grid(dom, weight)
        op = assemble_operator(dom, w, k, underflow="drop")
        pairs = pair_sample(dom, n_pairs, seed, op.support)
        rows = feature_lipschitz_ratio(op, InnerMetricGraph(dom), pairs, refine=False)
        out.append(max(r.ratio for r in rows))
    return out


def run_kernel_threshold(l_list=(1, 2, 3, 5), k_list=(1, 2, 3, 4, 5, 6), h=1 / 64, n_pairs=400, growth_limit=1.5,
                         tol=None):
    """Least ``k`` whose kernel features stay Lipschitz under refinement, per cusp exponent."""
    tol = _book(tol)
    k_list = sorted(int(k) for k in k_list)
    if not k_list:
        raise InvalidArgument("k_list is empty")
    h_pair = (2 * h, h)
    rep = ExperimentReport(
        "kernel-threshold",
        {"l_list": list(l_list), "k_list": k_list, "h_pair": list(h_pair), "n_pairs": n_pairs,
         "growth_limit": growth_limit},
    )

    def admissible(spec, k):
        a, b = kernel_growth(spec, k, h_pair, n_pairs)
        return b / a

    g = admissible(DomainSpec.square(), 2)
    rep.add("square_k2_growth", "Lipschitz features without a singularity", g, growth_limit,
            tol("square_k2_growth", 0.0), "le")
    flat = [admissible(DomainSpec.flat_cusp(), k) for k in k_list]
    rep.add("flat_cusp_no_admissible_k", "no Lipschitz embedding on the flat cusp",
            bool(min(flat) > growth_limit), True, 0.0, "true", growths=flat)
    k_emp = []
    for l in l_list:
        found = None
        growths = []
        for k in k_list:
            gr = admissible(DomainSpec.power_cusp(l), k)
            growths.append(gr)
            if gr <= growth_limit:
                found = k
                break
        k_emp.append(found)
        rep.add(f"k_emp_l{l}", "least admissible k on the cusp |y| < x^l", found is not None, True, 0.0, "true",
                k_emp=found, growths=growths)
    vals = [math.inf if k is None else k for k in k_emp]
    rep.add("k_emp_monotone", "sharper cusps need more derivatives", all(a <= b for a, b in zip(vals, vals[1:])),
            True, 0.0, "true", k_emp=[None if v == math.inf else v for v in vals])
    return rep


def run_kernel_checks(h_cusp=1 / 64, h_square=1 / 100, n_reproduce=100, n_dense=2000, n_subsets=5, subset=50,
                      seed=0, tol=None):
    """Reproducing property, symmetry and definiteness of the kernel."""
    tol = _book(tol)
    rng = np.random.default_rng(seed)
    rep = ExperimentReport(
        "kernel",
        {"h_cusp": h_cusp, "h_square": h_square, "n_reproduce": n_reproduce, "n_dense": n_dense,
         "n_subsets": n_subsets, "subset": subset, "seed": seed},
    )
    dom = build_grid_domain(DomainSpec.power_cusp(2), h_cusp)
    w = WeightField.on_grid(dom, lambda p: 2 * p[:, 0] ** 2, provenance="Coarea")
    op = assemble_operator(dom, w, 2, underflow="drop")
    xs = rng.choice(op.size, size=n_reproduce, replace=True)
    E = np.zeros((op.size, n_reproduce))
    E[xs, np.arange(n_reproduce)] = 1.0
    Phi = _solver(op).solve(E)
    U = rng.standard_normal((op.size, n_reproduce))
    AU = op.matrix @ U
    lhs = np.einsum("ij,ij->j", Phi, AU)
    unorm = np.sqrt(np.einsum("ij,ij->j", U, AU))
    err = float(np.max(np.abs(lhs - U[xs, np.arange(n_reproduce)]) / unorm))
    rep.add("reproducing", "point evaluation is represented by phi_x", err, 0.0, tol("reproducing", 1e-8), "abs")

    sq = build_grid_domain(DomainSpec.square(), h_square)
    op_sq = assemble_operator(sq, WeightField.constant(sq), 2)
    nodes = np.sort(rng.choice(sq.n_nodes, size=min(n_dense, sq.n_nodes), replace=False))
    km = kernel_matrix(op_sq, nodes)
    ev = km.eigenvalues()
    rep.add("kernel_symmetry", "the kernel is symmetric", km.asymmetry, 0.0, tol("kernel_symmetry", 1e-10), "abs",
            n_grid=sq.n_nodes, n_nodes=len(nodes))
    rep.add("kernel_psd", "the kernel is positive semidefinite", float(ev[0] / np.abs(ev).max()), 0.0,
            tol("kernel_psd", 1e-10), "ge", n_grid=sq.n_nodes)
    mins = []
    for _ in range(n_subsets):
        sub = np.sort(rng.choice(op.support, size=subset, replace=False))
        mins.append(kernel_matrix(op, sub).min_eigenvalue())
    rep.add("kernel_definite", "distinct nodes give a definite kernel", bool(min(mins) > 0), True, 0.0, "true",
            min_eigenvalues=mins)
    return rep


def run_geodesic(h=1 / 128, n_sources=32, n_targets=32, n_triples=1000, seed=0, tol=None):
    """Inner metric against Euclidean distance and the metric axioms."""
    tol = _book(tol)
    rng = np.random.default_rng(seed)
    rep = ExperimentReport(
        "geodesic", {"h": h, "n_sources": n_sources, "n_targets": n_targets, "n_triples": n_triples, "seed": seed}
    )
    for name, spec in (("square", DomainSpec.square()), ("disk", DomainSpec.disk())):
        dom = build_grid_domain(spec, h, stencil=16)
        g = InnerMetricGraph(dom)
        worst, low = 0.0, math.inf
        for s in rng.choice(dom.n_nodes, n_sources, replace=False):
            t = rng.choice(dom.n_nodes, n_targets, replace=False)
            t = t[t != s]
            d = inner_distances_from(g, s, t)
            e = np.linalg.norm(dom.points[t] - dom.points[s], axis=1)
            worst = max(worst, float(np.max(d / e)))
            low = min(low, float(np.min(d / e)))
        rep.add(f"convex_ratio_{name}", "inner metric of a convex set is Euclidean", worst, 1.0,
                tol(f"convex_ratio_{name}", 0.02), "le")
        rep.add(f"euclidean_lower_{name}", "inner distance dominates Euclidean distance", low, 1.0,
                tol(f"euclidean_lower_{name}", 1e-12), "ge")
    for name, spec in (("power_cusp", DomainSpec.power_cusp(2)), ("lshape", DomainSpec.lshape())):
        dom = build_grid_domain(spec, h, stencil=16)
        g = InnerMetricGraph(dom)
        tri = rng.choice(dom.n_nodes, size=(n_triples, 3))
        src = np.unique(tri)
        rows = dict(zip(src.tolist(), g.graph_distances(src)))

        def d(a, b):
            a, b = sorted((int(a), int(b)))
            return rows[a][b]

        sym = max(abs(rows[a][b] - rows[b][a]) for a, b, _ in tri)
        sym = max(sym, max(abs(inner_distance(g, a, b, refine=False) - inner_distance(g, b, a, refine=False))
                            for a, b, _ in tri[:100]))
        excess = max(d(a, c) - d(a, b) - d(b, c) for a, b, c in tri)
        e = np.linalg.norm(dom.points[tri[:, 0]] - dom.points[tri[:, 1]], axis=1)
        dd = np.array([d(a, b) for a, b, _ in tri])
        rep.add(f"symmetry_{name}", "the inner metric is symmetric", float(sym), 0.0, tol(f"symmetry_{name}", 1e-12),
                "abs")
        rep.add(f"triangle_{name}", "the inner metric satisfies the triangle inequality", float(excess), 0.0,
                tol(f"triangle_{name}", 1e-12), "le")
        rep.add(f"euclidean_lower_{name}", "inner distance dominates Euclidean distance",
                float(np.min(dd - e)), 0.0, tol(f"euclidean_lower_{name}", 1e-12), "ge")
    # refinement on the cusp: nested lattices only add shortcuts
    a_pt, b_pt = (0.25, 0.0), (0.875, 0.5)
    prev = None
    mono = True
    for hh in (1 / 32, 1 / 64, 1 / 128):
        dom = build_grid_domain(DomainSpec.power_cusp(2), hh, stencil=16)
        g = InnerMetricGraph(dom)
        d = inner_distance(g, dom.node_index(a_pt), dom.node_index(b_pt), refine=False)
        if prev is not None and d > prev + 1e-9:
            mono = False
        prev = d
    rep.add("refinement_monotone", "finer lattices only add shortcuts", mono, True, 0.0, "true")
    ls = build_grid_domain(DomainSpec.lshape(), h, stencil=16)
    d = inner_distance(InnerMetricGraph(ls), ls.node_index((0.25, 0.75)), ls.node_index((0.75, 0.25)))
    rep.add("lshape_corner", "taut path around the notch corner", d, math.sqrt(0.5), tol("lshape_corner", 0.05), "rel")
    two = build_grid_domain(DomainSpec.rectangles([[0.0, 0.4, 0.0, 1.0], [0.6, 1.0, 0.0, 1.0]]), 1 / 32)
    d = inner_distance(InnerMetricGraph(two), 0, two.n_nodes - 1)
    rep.add("disconnected", "distance across components is infinite", math.isinf(d), True, 0.0, "true")
    return rep


def run_retraction(l=2, n_s=20, seed=0, tol=None):
    """Conic-structure inequalities for the catalog retractions."""
    tol = _book(tol)
    rep = ExperimentReport("retraction", {"l": l, "n_s": n_s, "seed": seed})
    s_grid = np.linspace(1.0 / n_s, 1.0, n_s)
    etas = 2.0 ** -np.arange(2, 8)
    cusp = Retraction(DomainSpec.power_cusp(l))
    fit_r, fit_R = check_jacobian_bounds(cusp, s_grid, etas)
    rep.add("jacobian_C", "slice Jacobian of r_s is bounded below by a power of s", fit_r.C, 1.0,
            tol("jacobian_C", 0.0), "abs", nu=fit_r.nu)
    rep.add("jacobian_nu", "slice Jacobian of r_s is bounded below by a power of s", fit_r.nu, float(l),
            tol("jacobian_nu", 0.0), "abs")
    lip, _ = check_lipschitz_cs(cusp, s_grid, 1000, seed)
    rep.add("lipschitz_C", "r_s is Cs-Lipschitz", lip.C, 1.0, tol("lipschitz_C", 0.05), "abs")
    for a in (0.0, 0.5, 1.0, 2.0, 2.5):
        fit = check_density_comparison(cusp, lambda p, a=a: p[:, 0] ** a, s_grid, 2000, seed)
        rep.add(f"density_nu_a{a:g}", "density comparison along the retraction", fit.nu, float(math.ceil(a)),
                tol(f"density_nu_a{a:g}", 0.0), "abs", a=a)
        rep.add(f"density_C_a{a:g}", "density comparison along the retraction", fit.C, 1.0,
                tol(f"density_C_a{a:g}", 0.0), "abs", a=a)
    try:
        check_density_comparison(Retraction(DomainSpec.interval()), lambda p: np.exp(-1 / p[:, 0]), s_grid, 2000,
                                 seed)
        flat = False
    except NoFitFound:
        flat = True
    rep.add("flat_density_no_fit", "a flat density admits no power comparison", flat, True, 0.0, "true")
    ps = check_partial_s(cusp, s_grid, 1000, seed)
    rep.add("partial_s_C", "speed of the retraction is bounded by the radius", ps.C, math.sqrt(1 + l * l),
            tol("partial_s_C", 0.0), "le")
    pt = check_partial_t(cusp, s_grid, etas)
    rep.add("partial_t_C", "speed of the inverse family on slices", pt.C, 3.0, tol("partial_t_C", 0.0), "le")
    pts = sample_points(cusp.spec, 1000, seed)
    rep.add("semigroup", "r_s o r_s' = r_ss'", semigroup_defect(cusp, 0.5, 0.3, pts), 0.0, tol("semigroup", 1e-12),
            "abs")
    rep.add("inverse", "R_t inverts r_1/t", inverse_defect(cusp, 2.0, pts), 0.0, tol("inverse", 1e-12), "abs")
    disk = Retraction(DomainSpec.disk())
    fr, fR = check_jacobian_bounds(disk, s_grid, etas)
    rep.add("disk_jacobian", "radial scaling has Jacobian s on slices", bool(fr.nu == 1 and fr.C == 1 and fR.passed),
            True, 0.0, "true", nu=fr.nu, C=fr.C)
    return rep


def run_coarea(resolution=512, samples=1_000_000, bins=64, seed=0, tol=None):
    """Coarea identity, Monte Carlo agreement and mass conservation on the push-forward catalog."""
    tol = _book(tol)
    rep = ExperimentReport("coarea", {"resolution": resolution, "samples": samples, "bins": bins, "seed": seed})
    for name, spec in catalog_specs().items():
        gs = {
            "one": lambda p: np.ones(len(p)),
            "x2": lambda p: np.sum(p**2, axis=1),
            "xi": spec.source.xi,
        }
        for gname, g in gs.items():
            lhs, rhs = coarea_check(spec, g, resolution)
            rep.add(f"coarea_{name}_{gname}", "coarea formula", abs(lhs - rhs) / abs(rhs), 0.0,
                    tol(f"coarea_{name}_{gname}", 0.02), "abs", lhs=lhs, rhs=rhs)
        mc = monte_carlo_density(spec, samples, bins, seed)
        f = pushforward_density(spec.with_target(mc.points[:, 0]), 64)
        zero = f.values <= 1e-12 * f.values.max()
        lo, hi = spec.image
        near_zero = np.zeros(bins, dtype=bool)
        for edge, dens in ((lo, pushforward_density(spec.with_target([lo + 1e-9 * (hi - lo)]), 64).values[0]),
                           (hi, pushforward_density(spec.with_target([hi - 1e-9 * (hi - lo)]), 64).values[0])):
            if dens <= 1e-6 * f.values.max():
                idx = np.argsort(np.abs(mc.points[:, 0] - edge))[:2]
                near_zero[idx] = True
        use = ~near_zero & ~zero & (mc.values > 0)
        dev = float(np.max(np.abs(f.values[use] - mc.values[use]) / mc.values[use]))
        rep.add(f"oracle_{name}", "coarea density against the Monte Carlo oracle", dev, 0.0,
                tol(f"oracle_{name}", 0.05), "abs")
        xg, wg = np.polynomial.legendre.leggauss(resolution)
        t = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        total = float(np.dot(0.5 * (hi - lo) * wg, pushforward_density(spec.with_target(t), 64).values))
        mass = source_mass(spec, resolution)
        rep.add(f"mass_{name}", "push-forward preserves total mass", abs(total - mass) / mass, 0.0,
                tol(f"mass_{name}", 0.02), "abs", total=total, mass=mass)
    # vanishing density of |x|^2 on the unit ball of R^4
    ns = PushforwardSpec.norm_squared(4)
    r = np.linspace(0.05, 0.95, 19)
    f = pushforward_density(ns.with_target(r), 64)
    dev = float(np.max(np.abs(f.values - np.pi**2 * r) / (np.pi**2 * r)))
    rep.add("norm_squared_closed_form", "the push-forward density tends to 0 at 0", dev, 0.0,
            tol("norm_squared_closed_form", 0.02), "abs")
    mc = monte_carlo_density(ns, samples, bins, seed)
    i = int(np.argmin(np.abs(mc.points[:, 0] - 0.5)))
    ref = np.pi**2 * mc.points[i, 0]
    rep.add("norm_squared_oracle", "the push-forward density tends to 0 at 0", abs(mc.values[i] - ref) / ref, 0.0,
            tol("norm_squared_oracle", 0.05), "abs", r=float(mc.points[i, 0]))
    grid = np.linspace(0, 1, 1025)[1:-1]
    fw = pushforward_density(ns.with_target(grid), 64)
    fit = fit_lower_bound(fw)
    rep.add("vanishing_exponent", "the push-forward density tends to 0 at 0", fit.alpha, 1.0,
            tol("vanishing_exponent", 0.1), "abs", c=fit.c)
    return rep


SUITES = {
    "flat-cusp": run_flat_cusp_counterexample,
    "thresholds": run_threshold_sweep,
    "slice-lemma": run_slice_lemma,
    "morrey": run_morrey_sup,
    "kernel-threshold": run_kernel_threshold,
    "kernel": run_kernel_checks,
    "geodesic": run_geodesic,
    "retraction": run_retraction,
    "coarea": run_coarea,
}


def run_suite(name, params=None, tol=None):
    if name not in SUITES:
        raise InvalidArgument(f"unknown suite {name!r}; choose from {sorted(SUITES)}")
    return SUITES[name](**(params or {}), tol=tol)
