"""Quasi-homogeneous retractions of catalog domains onto their base point.

For ``PowerCusp(l)`` the family is ``r_s(x, y) = (s x, s**l y)``; for
``Disk``, ``Sector`` and ``Interval`` it is the radial scaling
``r_s(x) = s x``. The inverse family is ``R_t = r_t`` read as a map
``N^eta -> N^{t eta}`` on slices. Each check samples the relevant
inequality and fits constants from a fixed, finite search space.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .exceptions import InvalidArgument, NoFitFound, OutOfDomain
from .geometry import sphere_slice

NU_RANGE = tuple(range(13))
C_CHOICES = (1, 2, 5, 10)
SLACK = 1e-12
RETRACTABLE = ("PowerCusp", "Disk", "Sector", "Interval")


@dataclass(frozen=True)
class FitReport:
    inequality: str
    C: float
    nu: float
    max_violation: float
    samples: int
    passed: bool = True

    def to_dict(self):
        return asdict(self)


class Retraction:
    """Catalog retraction ``r_s`` of a :class:`DomainSpec` onto its base point."""

    def __init__(self, spec):
        if spec.kind not in RETRACTABLE:
            raise InvalidArgument(f"no catalog retraction for {spec.kind}")
        self.spec = spec
        self.x0 = np.asarray(spec.base_point, dtype=float)
        if spec.kind == "Interval":
            self.x0 = np.zeros(1)
        self.exponents = np.ones(spec.dim)
        if spec.kind == "PowerCusp":
            self.exponents = np.array([1.0, float(spec.params["l"])])

    def scale(self, s):
        return np.asarray(s, dtype=float)[..., None] ** self.exponents

    def __call__(self, s, pts):
        return self.apply(s, pts)

    def apply(self, s, pts, check=True):
        """``r_s`` on an array of points (``s`` scalar or one value per point)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        s = np.asarray(s, dtype=float)
        if (s <= 0).any() or (s > 1).any():
            raise InvalidArgument("s must lie in (0, 1]")
        if check and not self.spec.contains(pts).all():
            raise OutOfDomain("point outside the domain")
        return self.x0 + self.scale(s) * (pts - self.x0)

    def inverse_family(self, t, pts):
        """``R_t``; for the catalog maps ``R_t = r_t`` and ``R_t o r_{1/t} = id``."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return self.x0 + self.scale(t) * (pts - self.x0)

    def ds(self, s, pts):
        """Exact ``d r_s / d s`` (used to validate the finite-difference check)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        e = self.exponents
        return e * np.asarray(s, dtype=float)[..., None] ** (e - 1) * (pts - self.x0)


def apply_retraction(ret, s, x):
    """``r_s(x)`` for a single point ``x``; raises :class:`OutOfDomain` off the domain."""
    out = ret.apply(float(s), np.asarray(x, dtype=float)[None, :])[0]
    return out


def sample_points(spec, n, seed=0):
    """Seeded points inside ``spec``; cusps are sampled along their axis so the tip is covered."""
    rng = np.random.default_rng(seed)
    if spec.kind == "Interval":
        a, b = spec.params["a"], spec.params["b"]
        return (a + (b - a) * (1 - rng.random(n)))[:, None]
    if spec.kind in ("PowerCusp", "FlatCusp"):
        x = 1 - rng.random(n)
        x = np.clip(x, max(spec.eps_cut, 1e-6), 1 - 1e-9)
        w = x ** float(spec.params["l"]) if spec.kind == "PowerCusp" else np.exp(-1 / x**2)
        y = (2 * rng.random(n) - 1) * w * (1 - 1e-9)
        return np.stack([x, y], axis=1)
    (xl, xh), (yl, yh) = spec.bounding_box
    out = []
    total = 0
    while total < n:
        p = np.stack([xl + (xh - xl) * rng.random(4 * n), yl + (yh - yl) * rng.random(4 * n)], axis=1)
        p = p[spec.contains(p)]
        out.append(p)
        total += len(p)
    return np.concatenate(out)[:n]


def _pairs(ret, pair_samples, seed):
    if np.isscalar(pair_samples):
        n = int(pair_samples)
        a = sample_points(ret.spec, n, seed)
        b = sample_points(ret.spec, n, seed + 1)
    else:
        arr = np.asarray(pair_samples, dtype=float)
        if arr.ndim != 3 or arr.shape[1] != 2:
            raise InvalidArgument("pair samples must have shape (n, 2, dim)")
        a, b = arr[:, 0], arr[:, 1]
    keep = np.linalg.norm(a - b, axis=1) > 0
    if keep.sum() < 1:
        raise InvalidArgument("at least one pair of distinct points is required")
    return a[keep], b[keep]


def _s_grid(s_grid, min_size=1):
    s = np.asarray(s_grid, dtype=float).ravel()
    if len(s) < min_size:
        raise InvalidArgument(f"the s grid needs at least {min_size} values")
    if (s <= 0).any() or (s > 1).any():
        raise InvalidArgument("s values must lie in (0, 1]")
    return s


def check_lipschitz_cs(ret, s_grid, pair_samples=1000, seed=0):
    """``C = max_s max_pairs |r_s x - r_s x'| / (s |x - x'|)`` and the per-s maxima."""
    s = _s_grid(s_grid)
    a, b = _pairs(ret, pair_samples, seed)
    per_s = []
    for sv in s:
        ra, rb = ret.apply(sv, a), ret.apply(sv, b)
        per_s.append(float(np.max(np.linalg.norm(ra - rb, axis=1) / np.linalg.norm(a - b, axis=1))))
    per_s = np.array(per_s)
    C = float(np.max(per_s / s))
    return FitReport("lipschitz_cs", C, 1.0, 0.0, len(a)), per_s


def _fit_power_lower(s, q, label, n_samples, nu_range=NU_RANGE):
    """Smallest ``C``, then smallest ``nu``, with ``q >= s**nu / C`` on every sample."""
    for C in C_CHOICES:
        for nu in nu_range:
            lower = s**nu / C
            if np.all(q >= lower * (1 - SLACK)):
                viol = float(np.max(np.clip(lower - q, 0, None) / lower))
                return FitReport(label, float(C), float(nu), viol, n_samples)
    return None


def _arc_jacobians(ret, eta, s, n_per_arc=65):
    """Arc-length ratio of ``r_s`` on polyline segments of ``N^eta``."""
    sl = sphere_slice(ret.spec, eta)
    ratios = []
    for lo, hi in sl.arcs:
        th = np.linspace(lo, hi, n_per_arc)
        pts = ret.x0 + eta * np.stack([np.cos(th), np.sin(th)], axis=1)
        img = ret.inverse_family(s, pts)
        ratios.append(np.linalg.norm(np.diff(img, axis=0), axis=1) / np.linalg.norm(np.diff(pts, axis=0), axis=1))
    return np.concatenate(ratios)


def check_jacobian_bounds(ret, s_grid, eta_grid, m=None):
    """Fit ``jac r_s^eta >= s**nu / C`` and ``jac R_t^eta >= t**e / C``.

    Returns two reports; the second passes when the fitted exponent is at
    most ``m - 1`` (``m`` is the dimension).
    """
    if ret.spec.dim != 2:
        raise InvalidArgument("slice Jacobians are defined for planar domains")
    s = _s_grid(s_grid)
    m = ret.spec.dim if m is None else m
    ss, qq = [], []
    for eta in np.asarray(eta_grid, dtype=float).ravel():
        for sv in s:
            q = _arc_jacobians(ret, float(eta), sv)
            ss.append(np.full(len(q), sv))
            qq.append(q)
    ss, qq = np.concatenate(ss), np.concatenate(qq)
    fit_r = _fit_power_lower(ss, qq, "jacobian_r_s", len(qq))
    if fit_r is None:
        raise NoFitFound("no (C, nu) in the search space bounds the slice Jacobian of r_s")
    fit_R = _fit_power_lower(ss, qq, "jacobian_R_t", len(qq))
    fit_R = FitReport(fit_R.inequality, fit_R.C, fit_R.nu, fit_R.max_violation, fit_R.samples, fit_R.nu <= m - 1)
    return fit_r, fit_R


def _density_values(f, pts):
    return np.asarray(f(pts), dtype=float).ravel()


def check_density_comparison(ret, f, s_grid, samples=2000, seed=0):
    """Fit ``s**nu / C * f(y) <= f(r_s y) <= C * f(y)`` over sampled ``(s, y)``.

    ``f`` is a callable on points (a :class:`WeightField` with an
    evaluator qualifies). Raises :class:`NoFitFound` if no ``nu <= 12`` and
    ``C`` in ``{1, 2, 5, 10}`` validate both inequalities.
    """
    s = _s_grid(s_grid)
    y = sample_points(ret.spec, int(samples), seed) if np.isscalar(samples) else np.atleast_2d(samples)
    fy = _density_values(f, y)
    use = fy > 0
    if not use.any():
        raise NoFitFound("the density vanishes on every sample")
    y, fy = y[use], fy[use]
    ss, qq = [], []
    for sv in s:
        q = _density_values(f, ret.apply(sv, y, check=False)) / fy
        ss.append(np.full(len(q), sv))
        qq.append(q)
    ss, qq = np.concatenate(ss), np.concatenate(qq)
    qmax = float(np.max(qq))
    for C in C_CHOICES:
        for nu in NU_RANGE:
            if qmax > C * (1 + SLACK):
                continue
            lower = ss**nu / C
            if np.all(qq >= lower * (1 - SLACK)):
                viol = float(np.max(np.clip(lower - qq, 0, None) / lower))
                return FitReport("density_comparison", float(C), float(nu), viol, len(qq))
    raise NoFitFound(
        "no nu <= 12 and C in {1, 2, 5, 10} bound f(r_s y) / f(y); "
        f"smallest ratio {float(np.min(qq)):.3e}"
    )


def check_partial_s(ret, s_grid, samples=1000, seed=0, step=1e-6):
    """Fitted ``C`` in ``|dr/ds (s, x)| <= C |x - x0|`` by central differences in ``s``."""
    s = _s_grid(s_grid, min_size=2)
    x = sample_points(ret.spec, int(samples), seed) if np.isscalar(samples) else np.atleast_2d(samples)
    r = np.linalg.norm(x - ret.x0, axis=1)
    x, r = x[r > 0], r[r > 0]
    best = 0.0
    for sv in s:
        lo, hi = max(sv - step, step), min(sv + step, 1.0)
        d = (ret.apply(hi, x, check=False) - ret.apply(lo, x, check=False)) / (hi - lo)
        best = max(best, float(np.max(np.linalg.norm(d, axis=1) / r)))
    return FitReport("partial_s", best, 0.0, 0.0, len(x) * len(s))


def check_partial_t(ret, t_grid, eta_grid, step=1e-6):
    """Fitted ``C`` in ``|dR^eta/dt (t, x)| <= C eta`` over slice points of ``N^eta``."""
    t = _s_grid(t_grid, min_size=2)
    best = 0.0
    n = 0
    for eta in np.asarray(eta_grid, dtype=float).ravel():
        pts = sphere_slice(ret.spec, float(eta)).points
        for tv in t:
            lo, hi = max(tv - step, step), min(tv + step, 1.0)
            d = (ret.inverse_family(hi, pts) - ret.inverse_family(lo, pts)) / (hi - lo)
            best = max(best, float(np.max(np.linalg.norm(d, axis=1))) / eta)
            n += len(pts)
    return FitReport("partial_t", best, 0.0, 0.0, n)


def semigroup_defect(ret, s1, s2, pts):
    """``max |r_s1(r_s2 x) - r_{s1 s2} x|``."""
    a = ret.apply(s1, ret.apply(s2, pts, check=False), check=False)
    b = ret.apply(s1 * s2, pts, check=False)
    return float(np.max(np.abs(a - b)))


def inverse_defect(ret, t, pts):
    """``max |R_t(r_{1/t} x) - x|`` for ``t >= 1`` paired with the contraction ``r_{1/t}``."""
    pts = np.atleast_2d(pts)
    back = ret.inverse_family(t, ret.apply(1.0 / t, pts, check=False))
    return float(np.max(np.abs(back - pts)))
