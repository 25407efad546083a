"""Model singular domains and their lattice discretizations.

A :class:`DomainSpec` describes one member of a small catalog of planar
domains (plus the unit interval) with an optional truncation ``eps_cut``
that removes the part ``x < eps_cut`` near a singular tip.
:func:`build_grid_domain` turns a spec into a :class:`GridDomain`: the
lattice points ``h * Z^dim`` strictly inside the domain, a cell volume per
node, boundary markers, and a neighbor graph on a 4-, 8- or 16-point
stencil.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from .exceptions import EmptyDomain, EmptySlice, InvalidArgument

KINDS = (
    "Square",
    "Disk",
    "Sector",
    "PowerCusp",
    "FlatCusp",
    "Annulus",
    "LShape",
    "Interval",
    "Rectangles",
)

# half-stencils; the opposite offsets are implied (edges are undirected)
_STENCILS = {
    4: ((1, 0), (0, 1)),
    8: ((1, 0), (0, 1), (1, 1), (1, -1)),
    16: ((1, 0), (0, 1), (1, 1), (1, -1), (1, 2), (2, 1), (1, -2), (2, -1)),
}

_DEFAULT_PARAMS = {
    "Square": {},
    "Disk": {"radius": 1.0},
    "Sector": {"angle": math.pi / 2, "radius": 1.0},
    "PowerCusp": {"l": 2.0},
    "FlatCusp": {},
    "Annulus": {"r_in": 0.5, "r_out": 1.0},
    "LShape": {},
    "Interval": {"a": 0.0, "b": 1.0},
    "Rectangles": {"boxes": [[0.0, 1.0, 0.0, 1.0]]},
}

_BIG = 1e300


def _neg_log(v):
    with np.errstate(divide="ignore"):
        return np.log(v)


@dataclass(frozen=True, eq=False)
class DomainSpec:
    """A catalog domain.

    Parameters
    ----------
    kind : str
        One of :data:`KINDS`.
    params : dict
        Kind-specific parameters (``l`` for ``PowerCusp``, ``angle`` for
        ``Sector``, ``r_in``/``r_out`` for ``Annulus``, ...). Missing keys
        take catalog defaults.
    eps_cut : float
        Points with ``x < eps_cut`` are excluded.
    """

    kind: str
    params: dict = field(default_factory=dict)
    eps_cut: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidArgument(f"unknown domain kind {self.kind!r}")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        unknown = set(self.params) - set(merged)
        if unknown:
            raise InvalidArgument(f"unknown parameter(s) {sorted(unknown)} for {self.kind}")
        merged.update(self.params)
        object.__setattr__(self, "params", merged)
        if self.eps_cut < 0:
            raise InvalidArgument("eps_cut must be >= 0")
        if self.kind == "PowerCusp" and float(merged["l"]) < 1:
            raise InvalidArgument("PowerCusp exponent l must be >= 1")
        if self.kind == "Sector" and not 0 < float(merged["angle"]) <= math.pi:
            raise InvalidArgument("Sector angle must lie in (0, pi]")
        if self.kind == "Annulus" and not 0 <= merged["r_in"] < merged["r_out"]:
            raise InvalidArgument("Annulus needs 0 <= r_in < r_out")
        if self.kind == "Interval" and not merged["a"] < merged["b"]:
            raise InvalidArgument("Interval needs a < b")

    def __eq__(self, other):
        return (
            isinstance(other, DomainSpec)
            and self.kind == other.kind
            and self.params == other.params
            and self.eps_cut == other.eps_cut
        )

    def __hash__(self):
        return hash((self.kind, json.dumps(self.params, sort_keys=True), self.eps_cut))

    # -- constructors -----------------------------------------------------
    @classmethod
    def square(cls, **kw):
        return cls("Square", {}, **kw)

    @classmethod
    def disk(cls, radius=1.0, **kw):
        return cls("Disk", {"radius": radius}, **kw)

    @classmethod
    def sector(cls, angle=math.pi / 2, **kw):
        return cls("Sector", {"angle": angle}, **kw)

    @classmethod
    def power_cusp(cls, l=2.0, **kw):
        return cls("PowerCusp", {"l": l}, **kw)

    @classmethod
    def flat_cusp(cls, **kw):
        return cls("FlatCusp", {}, **kw)

    @classmethod
    def annulus(cls, r_in=0.5, r_out=1.0, **kw):
        return cls("Annulus", {"r_in": r_in, "r_out": r_out}, **kw)

    @classmethod
    def lshape(cls, **kw):
        return cls("LShape", {}, **kw)

    @classmethod
    def interval(cls, a=0.0, b=1.0, **kw):
        return cls("Interval", {"a": a, "b": b}, **kw)

    @classmethod
    def rectangles(cls, boxes, **kw):
        return cls("Rectangles", {"boxes": [list(map(float, b)) for b in boxes]}, **kw)

    # -- geometry ---------------------------------------------------------
    @property
    def dim(self):
        return 1 if self.kind == "Interval" else 2

    @property
    def bounding_box(self):
        """``((xmin, xmax),)`` in 1-D, ``((xmin, xmax), (ymin, ymax))`` in 2-D."""
        p = self.params
        k = self.kind
        if k in ("Square", "LShape"):
            return ((0.0, 1.0), (0.0, 1.0))
        if k in ("Disk", "Sector"):
            r = float(p["radius"])
            return ((-r, r), (-r, r))
        if k == "Annulus":
            r = float(p["r_out"])
            return ((-r, r), (-r, r))
        if k in ("PowerCusp", "FlatCusp"):
            return ((0.0, 1.0), (-1.0, 1.0))
        if k == "Interval":
            return ((float(p["a"]), float(p["b"])),)
        boxes = np.asarray(p["boxes"], dtype=float)
        return (
            (boxes[:, 0].min(), boxes[:, 1].max()),
            (boxes[:, 2].min(), boxes[:, 3].max()),
        )

    @property
    def base_point(self):
        """The singular (or reference) point used by slices and retractions."""
        if self.kind in ("Square", "Rectangles"):
            (x0, x1), (y0, y1) = self.bounding_box
            return np.array([(x0 + x1) / 2, (y0 + y1) / 2])
        if self.kind == "LShape":
            return np.array([0.5, 0.5])
        if self.kind == "Interval":
            return np.array([float(self.params["a"])])
        return np.zeros(2)

    def level(self, pts):
        """Continuous function that is positive exactly on the domain.

        Slacks of the individual constraints are combined by ``min``; cusp
        boundaries are compared in log scale so that exponentially thin
        bands stay resolvable.
        """
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x = pts[:, 0]
        k = self.kind
        p = self.params
        if k == "Interval":
            out = np.minimum(x - p["a"], p["b"] - x)
        else:
            y = pts[:, 1]
            r = np.hypot(x, y)
            if k == "Square":
                out = np.minimum.reduce([x, 1 - x, y, 1 - y])
            elif k == "LShape":
                sq = np.minimum.reduce([x, 1 - x, y, 1 - y])
                out = np.minimum(sq, np.maximum(0.5 - x, 0.5 - y))
            elif k == "Disk":
                out = p["radius"] - r
            elif k == "Annulus":
                out = np.minimum(r - p["r_in"], p["r_out"] - r)
            elif k == "Sector":
                out = np.minimum.reduce(
                    [r, p["radius"] - r, p["angle"] / 2 - np.abs(np.arctan2(y, x))]
                )
            elif k == "Rectangles":
                parts = [
                    np.minimum.reduce([x - b[0], b[1] - x, y - b[2], b[3] - y])
                    for b in p["boxes"]
                ]
                out = np.maximum.reduce(parts)
            else:
                with np.errstate(divide="ignore", invalid="ignore"):
                    if k == "PowerCusp":
                        logw = np.where(x > 0, float(p["l"]) * _neg_log(np.where(x > 0, x, 1.0)), -np.inf)
                    else:
                        logw = np.where(x > 0, -1.0 / np.where(x > 0, x, 1.0) ** 2, -np.inf)
                    band = logw - _neg_log(np.abs(y))
                out = np.minimum.reduce([x, 1 - x, band])
        if self.eps_cut > 0:
            out = np.minimum(out, x - self.eps_cut + 1e-300)
        return np.clip(out, -_BIG, _BIG)

    def contains(self, pts):
        """Vectorized membership predicate."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        x = pts[:, 0]
        k = self.kind
        p = self.params
        if k == "Interval":
            inside = (x > p["a"]) & (x < p["b"])
        else:
            y = pts[:, 1]
            if k == "Square":
                inside = (x > 0) & (x < 1) & (y > 0) & (y < 1)
            elif k == "LShape":
                inside = (x > 0) & (x < 1) & (y > 0) & (y < 1) & ~((x >= 0.5) & (y >= 0.5))
            elif k == "Disk":
                inside = np.hypot(x, y) < p["radius"]
            elif k == "Annulus":
                r = np.hypot(x, y)
                inside = (r > p["r_in"]) & (r < p["r_out"])
            elif k == "Sector":
                r = np.hypot(x, y)
                inside = (r > 0) & (r < p["radius"]) & (np.abs(np.arctan2(y, x)) < p["angle"] / 2)
            elif k == "Rectangles":
                inside = np.zeros(len(x), dtype=bool)
                for b in p["boxes"]:
                    inside |= (x > b[0]) & (x < b[1]) & (y > b[2]) & (y < b[3])
            else:
                # log scale: exp(-1/x^2) underflows long before the band is empty
                xs = np.where(x > 0, x, 1.0)
                logw = float(p["l"]) * np.log(xs) if k == "PowerCusp" else -1.0 / xs**2
                ay = np.abs(y)
                with np.errstate(divide="ignore"):
                    thin = (ay == 0) | (_neg_log(np.where(ay > 0, ay, 1.0)) < logw)
                inside = (x > 0) & (x < 1) & thin
        if self.eps_cut > 0:
            inside &= x >= self.eps_cut
        return inside

    def column_intervals(self, x):
        """Open y-intervals of the vertical section of the domain at abscissa ``x``."""
        if self.dim != 2:
            raise InvalidArgument("column_intervals is defined for planar domains")
        if self.eps_cut > 0 and x < self.eps_cut:
            return []
        k = self.kind
        p = self.params
        if k == "Square":
            return [(0.0, 1.0)] if 0 < x < 1 else []
        if k == "LShape":
            if not 0 < x < 1:
                return []
            return [(0.0, 1.0)] if x < 0.5 else [(0.0, 0.5)]
        if k in ("PowerCusp", "FlatCusp"):
            if not 0 < x < 1:
                return []
            w = x ** float(p["l"]) if k == "PowerCusp" else math.exp(-1.0 / x**2)
            # keep the axis point when the width underflows to zero
            w = max(w, math.ulp(0.0))
            return [(-w, w)]
        if k == "Disk":
            r = p["radius"]
            if abs(x) >= r:
                return []
            s = math.sqrt(r * r - x * x)
            return [(-s, s)]
        if k == "Annulus":
            ro, ri = p["r_out"], p["r_in"]
            if abs(x) >= ro:
                return []
            so = math.sqrt(ro * ro - x * x)
            if abs(x) >= ri:
                return [(-so, so)]
            si = math.sqrt(ri * ri - x * x)
            return [(-so, -si), (si, so)]
        if k == "Sector":
            r = p["radius"]
            half = p["angle"] / 2
            if abs(x) >= r:
                return []
            s = math.sqrt(r * r - x * x)
            if x > 0:
                w = min(s, x * math.tan(half)) if half < math.pi / 2 else s
                return [(-w, w)]
            if half <= math.pi / 2:
                return []
            w = abs(x) * math.tan(math.pi - half)
            if w >= s:
                return []
            return [(-s, -w), (w, s)]
        # Rectangles: union of sections, merged
        spans = sorted((b[2], b[3]) for b in p["boxes"] if b[0] < x < b[1])
        merged = []
        for lo, hi in spans:
            if merged and lo < merged[-1][1]:
                merged[-1] = (merged[-1][0], max(merged[-1][1], hi))
            else:
                merged.append((lo, hi))
        return merged

    # -- serialization ----------------------------------------------------
    def to_dict(self, h=None, stencil=None):
        out = {"kind": self.kind, "params": dict(self.params), "eps_cut": self.eps_cut}
        if h is not None:
            out["h"] = h
        if stencil is not None:
            out["stencil"] = stencil
        return out

    def to_json(self, h=None, stencil=None):
        return json.dumps(self.to_dict(h, stencil), sort_keys=True)

    @classmethod
    def from_dict(cls, d):
        allowed = {"kind", "params", "h", "stencil", "eps_cut"}
        unknown = set(d) - allowed
        if unknown:
            raise InvalidArgument(f"unknown domain key(s) {sorted(unknown)}")
        return cls(d["kind"], dict(d.get("params", {})), eps_cut=float(d.get("eps_cut", 0.0)))

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def load_domain(d):
    """Parse a domain JSON object into ``(spec, h, stencil)``."""
    spec = DomainSpec.from_dict(d)
    return spec, d.get("h"), d.get("stencil", 8)


@dataclass(frozen=True, eq=False)
class GridDomain:
    """Lattice discretization of a :class:`DomainSpec`.

    Nodes are the lattice points ``h * (i, j)`` strictly inside the
    domain. ``cell_volume`` partitions each vertical column of the domain
    exactly among its nodes (the outermost node of a run absorbs the
    sliver up to the boundary), and the first/last columns absorb the
    slivers up to the ends of the x-range.
    """

    spec: DomainSpec
    h: float
    stencil: int
    ij: np.ndarray
    cell_volume: np.ndarray
    index_grid: np.ndarray
    origin: tuple

    @property
    def dim(self):
        return self.spec.dim

    @property
    def n_nodes(self):
        return len(self.ij)

    @cached_property
    def points(self):
        return self.ij * self.h

    @property
    def nodes(self):
        return self.points

    def lookup(self, ij):
        """Node indices for lattice index rows ``ij`` (``-1`` where not a node)."""
        ij = np.atleast_2d(np.asarray(ij, dtype=np.int64))
        rel = ij - np.asarray(self.origin, dtype=np.int64)
        shape = np.asarray(self.index_grid.shape)
        ok = np.all((rel >= 0) & (rel < shape), axis=1)
        out = np.full(len(ij), -1, dtype=np.int64)
        if ok.any():
            out[ok] = self.index_grid[tuple(rel[ok].T)]
        return out

    def node_index(self, point):
        """Index of the node at ``point``; raises ``KeyError`` if it is not a node."""
        ij = np.rint(np.asarray(point, dtype=float) / self.h).astype(np.int64)
        if not np.allclose(ij * self.h, point, atol=1e-9 * max(self.h, 1.0)):
            raise KeyError(f"{point} is not a lattice point")
        idx = int(self.lookup(ij[None, :])[0])
        if idx < 0:
            raise KeyError(f"{point} is not a node of the domain")
        return idx

    def nearest_node(self, point):
        d = np.linalg.norm(self.points - np.asarray(point, dtype=float), axis=1)
        return int(np.argmin(d))

    @cached_property
    def boundary_flags(self):
        """True for nodes with a non-member lattice neighbor (within ``h`` of the frontier)."""
        flags = np.zeros(self.n_nodes, dtype=bool)
        for axis in range(self.dim):
            for sgn in (-1, 1):
                off = np.zeros(self.dim, dtype=np.int64)
                off[axis] = sgn
                flags |= self.lookup(self.ij + off) < 0
        return flags

    @cached_property
    def adjacency(self):
        """``(edges, lengths)``: undirected edges ``(E, 2)`` and their Euclidean lengths."""
        return _build_edges(self)

    @property
    def edges(self):
        return self.adjacency[0]

    @property
    def edge_lengths(self):
        return self.adjacency[1]

    @property
    def total_volume(self):
        return float(self.cell_volume.sum())

    def lines(self, axis):
        """Decompose the nodes into maximal runs of consecutive lattice points along ``axis``.

        Returns ``(run_start, run_length, position)`` per node, where
        ``run_start`` is the node index of the first point of the run.
        """
        n = self.n_nodes
        off = np.zeros(self.dim, dtype=np.int64)
        off[axis] = 1
        prev = self.lookup(self.ij - off)
        # sort by the other coordinates, then along the axis
        order = np.lexsort((self.ij[:, axis],) + tuple(self.ij[:, a] for a in range(self.dim) if a != axis))
        is_start = prev[order] < 0
        run_id = np.cumsum(is_start) - 1
        starts_sorted = np.flatnonzero(is_start)
        lengths_runs = np.diff(np.append(starts_sorted, n))
        pos_sorted = np.arange(n) - starts_sorted[run_id]
        run_start = np.empty(n, dtype=np.int64)
        run_len = np.empty(n, dtype=np.int64)
        pos = np.empty(n, dtype=np.int64)
        run_start[order] = order[starts_sorted[run_id]]
        run_len[order] = lengths_runs[run_id]
        pos[order] = pos_sorted
        return run_start, run_len, pos


def _stencil_offsets(stencil, dim):
    if stencil not in _STENCILS:
        raise InvalidArgument(f"stencil must be one of {sorted(_STENCILS)}")
    if dim == 1:
        return ((1,),)
    return _STENCILS[stencil]


def _build_edges(grid, samples=(0.25, 0.5, 0.75)):
    edges = []
    for off in _stencil_offsets(grid.stencil, grid.dim):
        off = np.asarray(off, dtype=np.int64)
        nb = grid.lookup(grid.ij + off)
        src = np.flatnonzero(nb >= 0)
        dst = nb[src]
        if len(src) and (np.abs(off).sum() > 1):
            ok = np.ones(len(src), dtype=bool)
            a = grid.points[src]
            b = grid.points[dst]
            for t in samples:
                ok &= grid.spec.contains(a + t * (b - a))
            src, dst = src[ok], dst[ok]
        elif len(src) and grid.spec.kind not in ("Square", "Disk", "Interval"):
            mid = 0.5 * (grid.points[src] + grid.points[dst])
            ok = grid.spec.contains(mid)
            src, dst = src[ok], dst[ok]
        edges.append(np.stack([src, dst], axis=1))
    edges = np.concatenate(edges, axis=0) if edges else np.zeros((0, 2), dtype=np.int64)
    lengths = np.linalg.norm(grid.points[edges[:, 1]] - grid.points[edges[:, 0]], axis=1)
    return edges, lengths


def _run_extents(coords, lo, hi, h):
    """Cell extents of consecutive lattice coordinates inside ``(lo, hi)``."""
    lower = coords - h / 2
    upper = coords + h / 2
    lower[0] = lo
    upper[-1] = hi
    return upper - lower


def build_grid_domain(spec, h, stencil=8):
    """Discretize ``spec`` on the lattice ``h * Z^dim``.

    Raises
    ------
    EmptyDomain
        If no lattice point lies strictly inside the domain.
    """
    if not h > 0:
        raise InvalidArgument("h must be positive")
    _stencil_offsets(stencil, spec.dim)
    box = spec.bounding_box
    xlo = max(box[0][0], spec.eps_cut) if spec.eps_cut > 0 else box[0][0]
    xhi = box[0][1]
    if not xlo < xhi:
        raise EmptyDomain("bounding box is empty")
    i_min = math.floor(xlo / h)
    i_max = math.ceil(xhi / h)
    cols = np.arange(i_min, i_max + 1, dtype=np.int64)

    if spec.dim == 1:
        xs = cols * h
        keep = spec.contains(xs[:, None])
        cols = cols[keep]
        if len(cols) == 0:
            raise EmptyDomain(f"no lattice point of spacing {h} inside {spec.kind}")
        vol = _run_extents(cols * h, xlo, xhi, h)
        ij = cols[:, None]
    else:
        ij_parts, vol_parts = [], []
        for i in cols:
            x = i * h
            for lo, hi in spec.column_intervals(x):
                j0 = math.floor(lo / h) + 1
                j1 = math.ceil(hi / h) - 1
                if j1 < j0:
                    continue
                js = np.arange(j0, j1 + 1, dtype=np.int64)
                ij_parts.append(np.stack([np.full(len(js), i), js], axis=1))
                vol_parts.append(_run_extents(js * h, lo, hi, h))
        if not ij_parts:
            raise EmptyDomain(f"no lattice point of spacing {h} inside {spec.kind}")
        ij = np.concatenate(ij_parts)
        yext = np.concatenate(vol_parts)
        keep = spec.contains(ij * h)
        ij, yext = ij[keep], yext[keep]
        if len(ij) == 0:
            raise EmptyDomain(f"no lattice point of spacing {h} inside {spec.kind}")
        xext = np.full(len(ij), h)
        first, last = ij[:, 0].min(), ij[:, 0].max()
        xext[ij[:, 0] == first] = first * h + h / 2 - xlo
        xext[ij[:, 0] == last] += xhi - (last * h + h / 2)
        if first == last:
            xext[:] = xhi - xlo
        vol = xext * yext

    origin = tuple(int(v) for v in ij.min(axis=0))
    shape = tuple(int(v) for v in ij.max(axis=0) - ij.min(axis=0) + 1)
    index_grid = np.full(shape, -1, dtype=np.int64)
    index_grid[tuple((ij - np.asarray(origin)).T)] = np.arange(len(ij))
    return GridDomain(spec, float(h), int(stencil), ij, np.asarray(vol, dtype=float), index_grid, origin)


@dataclass(frozen=True)
class SliceQuadrature:
    """Quadrature on ``S(x0, eta)`` intersected with the domain."""

    eta: float
    points: np.ndarray
    weights: np.ndarray
    arcs: tuple

    @property
    def total_weight(self):
        return float(self.weights.sum())


def _as_spec(domain):
    return domain.spec if isinstance(domain, GridDomain) else domain


def sphere_slice(domain, eta, tol=1e-10, order=32):
    """Quadrature points and arc-length weights on the circle of radius ``eta``.

    The circle is centered at the domain's base point. Crossings with the
    boundary are located by root finding on the domain's level function
    (never snapped to the grid), and each inside arc carries an
    ``order``-point Gauss-Legendre rule.

    Raises
    ------
    EmptySlice
        If the circle misses the domain.
    """
    spec = _as_spec(domain)
    if spec.dim != 2:
        raise InvalidArgument("sphere slices are defined for planar domains")
    if not eta > 0:
        raise InvalidArgument("eta must be positive")
    c = spec.base_point

    def g(theta):
        th = np.atleast_1d(theta)
        pts = c + eta * np.stack([np.cos(th), np.sin(th)], axis=1)
        return spec.level(pts)

    tiny = np.logspace(-300, -0.5, 400)
    thetas = np.unique(np.concatenate([np.linspace(-np.pi, np.pi, 4097), tiny, -tiny, [0.0]]))
    vals = g(thetas)
    inside = vals > 0
    if not inside.any():
        raise EmptySlice(f"circle of radius {eta} misses the {spec.kind} domain")
    if inside.all():
        arcs = [(-np.pi, np.pi)]
    else:
        roots = []
        for k in np.flatnonzero(inside[:-1] != inside[1:]):
            a, b = thetas[k], thetas[k + 1]
            xtol = max(1e-300, min(tol / eta, 1e-13 * max(abs(a), abs(b))))
            roots.append((brentq(lambda t: g(t)[0], a, b, xtol=xtol, rtol=1e-15), inside[k]))
        # walk the circle starting at an outside sample
        start = int(np.argmin(inside))
        ordered = sorted(roots, key=lambda r: (r[0] - thetas[start]) % (2 * np.pi))
        arcs = []
        open_at = None
        for t, was_inside in ordered:
            if not was_inside:
                open_at = t
            elif open_at is not None:
                hi = t if t > open_at else t + 2 * np.pi
                arcs.append((open_at, hi))
                open_at = None
    xg, wg = np.polynomial.legendre.leggauss(order)
    pts, wts = [], []
    for lo, hi in arcs:
        th = 0.5 * (hi - lo) * xg + 0.5 * (hi + lo)
        pts.append(c + eta * np.stack([np.cos(th), np.sin(th)], axis=1))
        wts.append(0.5 * (hi - lo) * eta * wg)
    return SliceQuadrature(float(eta), np.concatenate(pts), np.concatenate(wts), tuple(arcs))
