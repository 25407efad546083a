"""Source measures, push-forward densities and their Monte Carlo oracle.

The push-forward of ``xi * Lebesgue`` under a catalog map is computed
fiber by fiber: the density at ``y`` is the integral of ``xi / jac`` over
``Phi^{-1}(y)`` with respect to the Hausdorff measure of the fiber.
Fibers of the catalog maps are segments or round spheres, parametrized
analytically.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import gamma as _gamma

from .exceptions import (
    AllZeroWeight,
    DegenerateJacobian,
    FiberEscape,
    InvalidArgument,
)
from .geometry import GridDomain

MAPS = ("Identity", "ProjectX", "NormSquared", "Radial")
DENSITIES = ("constant", "monomial", "radial")
PROVENANCES = ("Analytic", "Coarea", "MonteCarlo", "Tabulated")

JAC_FLOOR = 1e-12


def sphere_area(k):
    """Surface measure of the unit sphere ``S^k`` in ``R^{k+1}``."""
    return 2 * math.pi ** ((k + 1) / 2) / _gamma((k + 1) / 2)


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


def _gauss(lo, hi, n):
    x, w = _leggauss(int(n))
    return 0.5 * (hi - lo) * x + 0.5 * (hi + lo), 0.5 * (hi - lo) * w


@dataclass(frozen=True)
class SourceMeasure:
    """``xi * Lebesgue`` restricted to a support set ``E``.

    ``density`` selects ``xi``: ``constant`` (``c``), ``monomial``
    (``c * |x_1|**a``) or ``radial`` (``c * |x|**a``). ``support`` is a
    dict with ``kind`` in ``interval`` (``lo``, ``hi``), ``band``
    (``l``: the cusp ``0 < x < 1, |y| < x**l``), ``ball`` (``radius``)
    or ``annulus`` (``r_in``, ``r_out``).
    """

    dim: int
    support: dict
    density: str = "constant"
    a: float = 0.0
    c: float = 1.0

    def __post_init__(self):
        if self.dim < 1:
            raise InvalidArgument("dim must be >= 1")
        if self.density not in DENSITIES:
            raise InvalidArgument(f"density must be one of {DENSITIES}")
        if self.c < 0:
            raise InvalidArgument("density constant must be nonnegative")
        if self.a < 0 and self.density != "constant":
            raise InvalidArgument("density exponent must be nonnegative")
        kind = self.support.get("kind")
        if kind not in ("interval", "band", "ball", "annulus"):
            raise InvalidArgument(f"unknown support kind {kind!r}")
        if kind == "interval" and self.dim != 1:
            raise InvalidArgument("interval supports are 1-dimensional")
        if kind == "band" and self.dim != 2:
            raise InvalidArgument("band supports are 2-dimensional")

    def xi(self, pts):
        pts = np.atleast_2d(pts)
        if self.density == "constant":
            return np.full(len(pts), float(self.c))
        if self.density == "monomial":
            return self.c * np.abs(pts[:, 0]) ** self.a
        return self.c * np.linalg.norm(pts, axis=1) ** self.a

    def contains(self, pts, slack=1e-9):
        pts = np.atleast_2d(pts)
        s = self.support
        kind = s["kind"]
        if kind == "interval":
            return (pts[:, 0] >= s["lo"] - slack) & (pts[:, 0] <= s["hi"] + slack)
        if kind == "band":
            x = pts[:, 0]
            return (x >= -slack) & (x <= 1 + slack) & (
                np.abs(pts[:, 1]) <= np.clip(x, 0, None) ** s["l"] * (1 + slack) + slack
            )
        r = np.linalg.norm(pts, axis=1)
        if kind == "ball":
            return r <= s.get("radius", 1.0) * (1 + slack)
        return (r >= s["r_in"] * (1 - slack)) & (r <= s["r_out"] * (1 + slack))

    def to_dict(self):
        return {"dim": self.dim, "support": dict(self.support), "density": self.density, "a": self.a, "c": self.c}

    @classmethod
    def from_dict(cls, d):
        return cls(int(d["dim"]), dict(d["support"]), d.get("density", "constant"), float(d.get("a", 0.0)), float(d.get("c", 1.0)))


@dataclass(frozen=True)
class Fiber:
    points: np.ndarray
    weights: np.ndarray
    jac: np.ndarray


class _CatalogMap:
    """Shared interface of the catalog maps (one instance per spec)."""

    def __init__(self, source):
        self.source = source

    def image(self):
        raise NotImplementedError

    def phi(self, pts):
        raise NotImplementedError

    def fiber(self, y, n):
        raise NotImplementedError

    def source_quadrature(self, n):
        raise NotImplementedError


class _Identity(_CatalogMap):
    def __init__(self, source):
        if source.support["kind"] != "interval":
            raise InvalidArgument("Identity needs an interval source")
        super().__init__(source)

    def image(self):
        return float(self.source.support["lo"]), float(self.source.support["hi"])

    def phi(self, pts):
        return np.atleast_2d(pts)[:, 0]

    def fiber(self, y, n):
        lo, hi = self.image()
        if not lo <= y <= hi:
            raise FiberEscape(f"target point {y} is outside the image [{lo}, {hi}]")
        return Fiber(np.array([[y]]), np.ones(1), np.ones(1))

    def source_quadrature(self, n):
        lo, hi = self.image()
        x, w = _gauss(lo, hi, n)
        return x[:, None], w, np.ones(n)


class _ProjectX(_CatalogMap):
    def __init__(self, source):
        if source.support["kind"] != "band":
            raise InvalidArgument("ProjectX needs a band source")
        super().__init__(source)
        self.l = float(source.support["l"])

    def image(self):
        return 0.0, 1.0

    def phi(self, pts):
        return np.atleast_2d(pts)[:, 0]

    def fiber(self, y, n):
        if not 0 < y < 1:
            raise FiberEscape(f"target point {y} is outside the image (0, 1)")
        w = y**self.l
        ys, ws = _gauss(-w, w, n)
        pts = np.stack([np.full(n, y), ys], axis=1)
        return Fiber(pts, ws, np.ones(n))

    def source_quadrature(self, n):
        # y outer, x inner: a different ordering from the fiber route
        pts, wts = [], []
        for lo, hi in ((-1.0, 0.0), (0.0, 1.0)):
            ys, wy = _gauss(lo, hi, n)
            x0 = np.abs(ys) ** (1 / self.l)
            xg, wg = _leggauss(int(n))
            xs = 0.5 * (1 - x0)[:, None] * xg[None, :] + 0.5 * (1 + x0)[:, None]
            ww = wy[:, None] * 0.5 * (1 - x0)[:, None] * wg[None, :]
            pts.append(np.stack([xs.ravel(), np.repeat(ys, n)], axis=1))
            wts.append(ww.ravel())
        pts = np.concatenate(pts)
        return pts, np.concatenate(wts), np.ones(len(pts))


class _Spherical(_CatalogMap):
    """Maps whose fibers are round spheres centered at the origin."""

    def __init__(self, source):
        if source.support["kind"] not in ("ball", "annulus"):
            raise InvalidArgument(f"{type(self).__name__} needs a ball or annulus source")
        super().__init__(source)
        s = source.support
        self.d = source.dim
        if self.d < 2:
            raise InvalidArgument("spherical fibers need dim >= 2")
        self.r_in = float(s.get("r_in", 0.0)) if s["kind"] == "annulus" else 0.0
        self.r_out = float(s.get("r_out", s.get("radius", 1.0)))

    def _sphere(self, r, n):
        # quadrature in the polar angle from the first axis; integrands are
        # assumed invariant under rotations fixing that axis
        phi, wphi = _gauss(0.0, math.pi, n)
        pts = np.zeros((n, self.d))
        pts[:, 0] = r * np.cos(phi)
        pts[:, 1] = r * np.sin(phi)
        w = r ** (self.d - 1) * np.sin(phi) ** (self.d - 2) * sphere_area(self.d - 2) * wphi
        return pts, w

    def _jac(self, r):
        raise NotImplementedError

    def _radius(self, y):
        raise NotImplementedError

    def fiber(self, y, n):
        lo, hi = self.image()
        if not lo < y < hi:
            raise FiberEscape(f"target point {y} is outside the image ({lo}, {hi})")
        r = self._radius(y)
        pts, w = self._sphere(r, n)
        return Fiber(pts, w, np.full(n, self._jac(r)))

    def source_quadrature(self, n):
        # slices orthogonal to the first axis, then radial in the slice
        cuts = sorted({-self.r_out, self.r_out, *(() if self.r_in == 0 else (-self.r_in, self.r_in))})
        pts, wts = [], []
        area = sphere_area(self.d - 2)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            x1, w1 = _gauss(lo, hi, n)
            rho_hi = np.sqrt(np.clip(self.r_out**2 - x1**2, 0, None))
            rho_lo = np.sqrt(np.clip(self.r_in**2 - x1**2, 0, None))
            xg, wg = _leggauss(int(n))
            rho = 0.5 * (rho_hi - rho_lo)[:, None] * xg[None, :] + 0.5 * (rho_hi + rho_lo)[:, None]
            ww = w1[:, None] * 0.5 * (rho_hi - rho_lo)[:, None] * wg[None, :] * area * rho ** (self.d - 2)
            p = np.zeros((n * n, self.d))
            p[:, 0] = np.repeat(x1, n)
            p[:, 1] = rho.ravel()
            pts.append(p)
            wts.append(ww.ravel())
        pts = np.concatenate(pts)
        r = np.linalg.norm(pts, axis=1)
        return pts, np.concatenate(wts), self._jac(r)


class _NormSquared(_Spherical):
    def image(self):
        return self.r_in**2, self.r_out**2

    def phi(self, pts):
        return np.sum(np.atleast_2d(pts) ** 2, axis=1)

    def _radius(self, y):
        return math.sqrt(y)

    def _jac(self, r):
        return 2 * np.asarray(r, dtype=float)


class _Radial(_Spherical):
    def image(self):
        return self.r_in, self.r_out

    def phi(self, pts):
        return np.linalg.norm(np.atleast_2d(pts), axis=1)

    def _radius(self, y):
        return y

    def _jac(self, r):
        return np.ones_like(np.asarray(r, dtype=float))


_MAP_CLASSES = {"Identity": _Identity, "ProjectX": _ProjectX, "NormSquared": _NormSquared, "Radial": _Radial}


@dataclass(frozen=True, eq=False)
class PushforwardSpec:
    """A source measure, a catalog map and the target evaluation points."""

    source: SourceMeasure
    map: str
    target: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        if self.map not in MAPS:
            raise InvalidArgument(f"map must be one of {MAPS}")
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).ravel())
        object.__setattr__(self, "_impl", _MAP_CLASSES[self.map](self.source))

    @property
    def image(self):
        return self._impl.image()

    def phi(self, pts):
        return self._impl.phi(pts)

    def fiber(self, y, n):
        return self._impl.fiber(y, n)

    def with_target(self, target):
        return PushforwardSpec(self.source, self.map, target)

    def to_dict(self):
        return {"source": self.source.to_dict(), "map": self.map, "target": [float(t) for t in self.target]}

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - {"source", "map", "target"}
        if unknown:
            raise InvalidArgument(f"unknown push-forward key(s) {sorted(unknown)}")
        return cls(SourceMeasure.from_dict(d["source"]), d["map"], np.asarray(d.get("target", []), dtype=float))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    # catalog constructors
    @classmethod
    def identity(cls, lo=0.0, hi=1.0, density="constant", a=0.0, target=()):
        return cls(SourceMeasure(1, {"kind": "interval", "lo": lo, "hi": hi}, density, a), "Identity", target)

    @classmethod
    def project_x(cls, l=2.0, density="constant", a=0.0, target=()):
        return cls(SourceMeasure(2, {"kind": "band", "l": l}, density, a), "ProjectX", target)

    @classmethod
    def norm_squared(cls, d=4, density="constant", a=0.0, target=()):
        return cls(SourceMeasure(d, {"kind": "ball", "radius": 1.0}, density, a), "NormSquared", target)

    @classmethod
    def radial(cls, r_in=1.0, r_out=2.0, d=2, density="constant", a=0.0, target=()):
        support = {"kind": "annulus", "r_in": r_in, "r_out": r_out} if r_in > 0 else {"kind": "ball", "radius": r_out}
        return cls(SourceMeasure(d, support, density, a), "Radial", target)


def catalog_specs():
    """The push-forward catalog used by the verification suites."""
    return {
        "identity": PushforwardSpec.identity(),
        "project_x_l2": PushforwardSpec.project_x(2.0),
        "norm_squared_d4": PushforwardSpec.norm_squared(4),
        "radial_annulus": PushforwardSpec.radial(1.0, 2.0),
    }


class WeightField:
    """Nonnegative density values on a set of nodes.

    ``points`` has one row per node. ``domain`` (a :class:`GridDomain`) or
    ``bounds`` (an interval for 1-D targets) locate the frontier; an
    optional ``evaluator`` gives the density off the nodes. ``inf``
    values are allowed and excluded from every quadrature.
    """

    def __init__(self, points, values, provenance="Tabulated", domain=None, bounds=None, evaluator=None):
        values = np.asarray(values, dtype=float).ravel()
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        if len(points) != len(values):
            raise InvalidArgument("points and values differ in length")
        if np.isnan(values).any() or (values < 0).any():
            raise InvalidArgument("weights must be nonnegative numbers")
        if provenance not in PROVENANCES:
            raise InvalidArgument(f"provenance must be one of {PROVENANCES}")
        self.points = points
        self.values = values
        self.provenance = provenance
        self.domain = domain
        self.bounds = bounds
        self.evaluator = evaluator

    @classmethod
    def on_grid(cls, domain, func, provenance="Analytic"):
        """Evaluate ``func(points)`` on the nodes of a :class:`GridDomain`."""
        vals = np.broadcast_to(np.asarray(func(domain.points), dtype=float), (domain.n_nodes,)).copy()
        return cls(domain.points, vals, provenance, domain=domain, evaluator=func)

    @classmethod
    def constant(cls, domain, value=1.0):
        return cls.on_grid(domain, lambda p: np.full(len(np.atleast_2d(p)), float(value)))

    def __len__(self):
        return len(self.values)

    @property
    def infinite(self):
        return np.isinf(self.values)

    @property
    def support(self):
        return (self.values > 0) & ~self.infinite

    @property
    def support_nodes(self):
        return np.flatnonzero(self.values > 0)

    def finite_values(self):
        """Values with the ``inf`` sentinel replaced by 0 (excluded from sums)."""
        return np.where(self.infinite, 0.0, self.values)

    def __call__(self, pts):
        if self.evaluator is None:
            raise InvalidArgument("this weight field has no off-node evaluator")
        return np.asarray(self.evaluator(np.atleast_2d(pts)), dtype=float)

    def scaled(self, c):
        ev = None if self.evaluator is None else (lambda p, f=self.evaluator: c * np.asarray(f(p)))
        return WeightField(self.points, c * self.values, self.provenance, self.domain, self.bounds, ev)

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        dim = self.points.shape[1]
        w.writerow([f"x{i}" for i in range(dim)] + ["f", "provenance"])
        for p, v in zip(self.points, self.values):
            w.writerow([f"{c:.12g}" for c in p] + [f"{v:.12g}", self.provenance])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        header, body = rows[0], rows[1:]
        dim = len(header) - 2
        pts = np.array([[float(c) for c in r[:dim]] for r in body]).reshape(len(body), dim)
        vals = np.array([float(r[dim]) for r in body])
        prov = body[0][dim + 1] if body else "Tabulated"
        return cls(pts, vals, prov)


@dataclass(frozen=True)
class LowerBoundFit:
    """Fitted lower bound ``f(y) >= c * d(y, B u frontier)**alpha``."""

    alpha: float
    c: float
    residual: float
    violations: int
    B: tuple = ()
    n_samples: int = 0


def pushforward_density(spec, quadrature_resolution=64, truncate=False):
    """Push-forward density at ``spec.target`` by fiber quadrature.

    ``truncate=True`` integrates ``min(xi / jac, 1)`` instead of
    ``xi / jac``.

    Raises
    ------
    FiberEscape
        A target point is outside the image or a quadrature point left the
        source support.
    DegenerateJacobian
        ``jac Phi < 1e-12`` at a quadrature point.
    """
    if quadrature_resolution < 1:
        raise InvalidArgument("quadrature_resolution must be >= 1")
    if len(spec.target) == 0:
        raise InvalidArgument("the push-forward spec has no target points")
    vals = np.empty(len(spec.target))
    for k, y in enumerate(spec.target):
        fib = spec.fiber(float(y), quadrature_resolution)
        if not spec.source.contains(fib.points).all():
            raise FiberEscape(f"fiber over {y} leaves the source support")
        if (fib.jac < JAC_FLOOR).any():
            raise DegenerateJacobian(f"jac Phi vanishes on the fiber over {y}")
        ratio = spec.source.xi(fib.points) / fib.jac
        if truncate:
            ratio = np.minimum(ratio, 1.0)
        vals[k] = float(np.dot(fib.weights, ratio))
    lo, hi = spec.image
    return WeightField(spec.target, vals, "Coarea", bounds=(lo, hi))


def _stratified(rng, n):
    return (np.arange(n) + rng.random(n)) / n


def _sample_pushforward(spec, n, rng):
    """Return ``(phi_values, total_mass)`` for ``n`` draws from the source measure."""
    src = spec.source
    s = src.support
    kind = s["kind"]
    a = src.a if src.density != "constant" else 0.0
    if spec.map == "Identity" and (src.density == "constant" or s["lo"] >= 0):
        lo, hi = s["lo"], s["hi"]
        u = _stratified(rng, n)
        e = a + 1
        x = (lo**e + u * (hi**e - lo**e)) ** (1 / e)
        return x, src.c * (hi**e - lo**e) / e
    if spec.map == "ProjectX" and src.density in ("constant", "monomial"):
        l = s["l"]
        e = l + a + 1
        x = _stratified(rng, n) ** (1 / e)
        return x, 2 * src.c / e
    if kind in ("ball", "annulus") and src.density in ("constant", "radial"):
        d = src.dim
        r_in = s.get("r_in", 0.0) if kind == "annulus" else 0.0
        r_out = s.get("r_out", s.get("radius", 1.0))
        e = d + a
        r = (r_in**e + _stratified(rng, n) * (r_out**e - r_in**e)) ** (1 / e)
        mass = src.c * sphere_area(d - 1) * (r_out**e - r_in**e) / e
        return (r**2 if spec.map == "NormSquared" else r), mass
    return _rejection(spec, n, rng)


def _rejection(spec, n, rng):
    src = spec.source
    s = src.support
    kind = s["kind"]
    if kind == "interval":
        lo_box, hi_box = np.array([s["lo"]]), np.array([s["hi"]])
    elif kind == "band":
        lo_box, hi_box = np.array([0.0, -1.0]), np.array([1.0, 1.0])
    else:
        r = s.get("r_out", s.get("radius", 1.0))
        lo_box, hi_box = -r * np.ones(src.dim), r * np.ones(src.dim)
    corners = np.array(np.meshgrid(*[[l_, h_] for l_, h_ in zip(lo_box, hi_box)])).reshape(src.dim, -1).T
    xi_max = float(max(src.xi(corners).max(), src.c))
    box_vol = float(np.prod(hi_box - lo_box))
    accepted, tried = [], 0
    total = 0
    while total < n:
        batch = max(2 * (n - total), 1024)
        pts = lo_box + (hi_box - lo_box) * rng.random((batch, src.dim))
        tried += batch
        keep = src.contains(pts, slack=0.0) & (rng.random(batch) * xi_max < src.xi(pts))
        accepted.append(pts[keep])
        total += int(keep.sum())
    pts = np.concatenate(accepted)
    # the mass estimate uses the full trial count; the first n draws feed the histogram
    mass = box_vol * xi_max * total / tried
    return spec.phi(pts[:n]), mass


def monte_carlo_density(spec, samples, bins=64, seed=0):
    """Histogram estimate of the push-forward density on ``bins`` equal bins.

    Inverse-CDF draws (with stratified uniforms) are used whenever the
    source has a closed-form radial or axial CDF; otherwise rejection
    sampling from a bounding box. Deterministic for a fixed ``seed``.
    """
    if samples < 10_000:
        raise InvalidArgument("samples must be >= 1e4")
    if bins < 1:
        raise InvalidArgument("bins must be >= 1")
    rng = np.random.default_rng(seed)
    vals, mass = _sample_pushforward(spec, int(samples), rng)
    lo, hi = spec.image
    counts, edges = np.histogram(vals, bins=bins, range=(lo, hi))
    width = (hi - lo) / bins
    centers = 0.5 * (edges[:-1] + edges[1:])
    dens = mass * counts / (samples * width)
    return WeightField(centers, dens, "MonteCarlo", bounds=(lo, hi))


def coarea_check(spec, g, resolution=512):
    """Both sides of the coarea formula for the integrand ``g``.

    ``lhs`` integrates ``g * jac Phi`` over the source by a direct
    quadrature of the source set; ``rhs`` integrates ``g`` over each fiber
    and then over the image.
    """
    if resolution < 2:
        raise InvalidArgument("resolution must be >= 2")
    pts, w, jac = spec._impl.source_quadrature(resolution)
    lhs = float(np.dot(w, np.asarray(g(pts), dtype=float) * jac))
    lo, hi = spec.image
    if spec.map == "Identity":
        ys, wy = _gauss(lo, hi, resolution)
        rhs = float(np.dot(wy, np.asarray(g(ys[:, None]), dtype=float)))
        return lhs, rhs
    ys, wy = _gauss(lo, hi, resolution)
    rhs = 0.0
    for y, wyk in zip(ys, wy):
        fib = spec.fiber(float(y), resolution)
        rhs += wyk * float(np.dot(fib.weights, np.asarray(g(fib.points), dtype=float)))
    return lhs, rhs


def source_mass(spec, resolution=512):
    """Total mass of the source measure by direct quadrature."""
    pts, w, _ = spec._impl.source_quadrature(resolution)
    return float(np.dot(w, spec.source.xi(pts)))


def _frontier_distance(field_):
    if field_.domain is not None and isinstance(field_.domain, GridDomain):
        dom = field_.domain
        if dom.dim == 1:
            lo = max(dom.spec.bounding_box[0][0], dom.spec.eps_cut)
            hi = dom.spec.bounding_box[0][1]
            x = dom.points[:, 0]
            return np.minimum(x - lo, hi - x)
        from scipy.ndimage import distance_transform_edt

        mask = np.zeros(np.asarray(dom.index_grid.shape) + 2, dtype=bool)
        mask[1:-1, 1:-1] = dom.index_grid >= 0
        dist = distance_transform_edt(mask) * dom.h
        rel = dom.ij - np.asarray(dom.origin) + 1
        return np.maximum(dist[tuple(rel.T)] - dom.h / 2, dom.h / 2)
    if field_.bounds is None:
        raise InvalidArgument("the weight field carries no frontier information")
    lo, hi = field_.bounds
    x = field_.points[:, 0]
    return np.minimum(x - lo, hi - x)


def fit_lower_bound(f, B=(), n_bins=20):
    """Fit ``f(y) >= c * d(y, B u frontier)**alpha`` on the nodes of ``f``.

    ``alpha`` is the least-squares slope through the lower envelope of
    ``log f`` against ``log d`` (lowest decile per distance bin); ``c`` is
    then the minimum ratio ``f / d**alpha``, so the fitted bound holds on
    every sample by construction.
    """
    vals = f.values
    if not (vals > 0).any():
        raise AllZeroWeight("the weight field vanishes identically")
    d = _frontier_distance(f)
    B = tuple(int(b) for b in B)
    if B:
        pb = f.points[list(B)]
        dB = np.min(np.linalg.norm(f.points[:, None, :] - pb[None, :, :], axis=2), axis=1)
        d = np.minimum(d, dB)
    use = (d > 0) & np.isfinite(vals)
    if B:
        use[list(B)] = False
    if use.sum() < 2:
        raise AllZeroWeight("too few usable nodes for a lower-bound fit")
    ld = np.log(d[use])
    with np.errstate(divide="ignore"):
        lf = np.log(vals[use])
    edges = np.linspace(ld.min(), ld.max() + 1e-12, n_bins + 1)
    env_x, env_y = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (ld >= lo) & (ld < hi)
        if not sel.any():
            continue
        q = np.quantile(lf[sel], 0.1)
        low = sel & (lf <= q)
        env_x.append(float(np.mean(ld[low])))
        env_y.append(float(np.mean(lf[low])))
    env_x, env_y = np.array(env_x), np.array(env_y)
    if len(env_x) >= 2 and np.ptp(env_x) > 0 and np.isfinite(env_y).all():
        alpha = float(np.polyfit(env_x, env_y, 1)[0])
    else:
        alpha = 0.0
    ratio = vals[use] / d[use] ** alpha
    c = float(ratio.min())
    bound = c * d[use] ** alpha
    slack = (bound - vals[use]) / np.where(bound > 0, bound, 1.0)
    viol = int((slack > 1e-12).sum())
    return LowerBoundFit(alpha, c, float(max(slack.max(), 0.0)), viol, B, int(use.sum()))
