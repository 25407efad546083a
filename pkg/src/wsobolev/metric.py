"""Inner (geodesic) metric on grid domains and inner-Lipschitz seminorms."""
from __future__ import annotations

import csv
import io
import math
import warnings
from functools import cached_property

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, dijkstra

from .exceptions import InvalidArgument, NonFiniteValue

EDGE_QUOTIENT = "EdgeQuotient"
ALL_PAIRS = "AllPairs"


class InnerMetricGraph:
    """Stencil graph of a :class:`GridDomain` weighted by Euclidean edge lengths."""

    def __init__(self, domain):
        self.domain = domain
        edges, lengths = domain.adjacency
        n = domain.n_nodes
        rows = np.concatenate([edges[:, 0], edges[:, 1]])
        cols = np.concatenate([edges[:, 1], edges[:, 0]])
        data = np.concatenate([lengths, lengths])
        self.matrix = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        self.n_components, self.labels = connected_components(self.matrix, directed=False)

    @property
    def n_nodes(self):
        return self.domain.n_nodes

    @cached_property
    def edges(self):
        return self.domain.adjacency[0]

    @cached_property
    def edge_lengths(self):
        return self.domain.adjacency[1]

    def node(self, a):
        """Accept a node index or a point (snapped to the nearest node)."""
        if np.ndim(a) == 0:
            a = int(a)
            if not 0 <= a < self.n_nodes:
                raise InvalidArgument(f"node index {a} out of range")
            return a
        return self.domain.nearest_node(a)

    def graph_distances(self, sources):
        """Shortest-path lengths from each source to every node (``inf`` across components)."""
        sources = np.atleast_1d(np.asarray(sources, dtype=np.int64))
        return np.atleast_2d(dijkstra(self.matrix, directed=False, indices=sources))

    def shortest_path(self, a, b):
        dist, pred = dijkstra(self.matrix, directed=False, indices=a, return_predecessors=True)
        if not np.isfinite(dist[b]):
            return None, math.inf
        path = [b]
        while path[-1] != a:
            path.append(int(pred[path[-1]]))
        return path[::-1], float(dist[b])

    def visible(self, p, q):
        """Whether the straight segment ``pq`` stays inside the domain (sampled at ``h/4``)."""
        seg = np.linalg.norm(q - p)
        n = max(int(math.ceil(seg / (self.domain.h / 4))), 1)
        t = np.linspace(0.0, 1.0, n + 1)[1:-1]
        if len(t) == 0:
            return True
        return bool(self.domain.spec.contains(p + t[:, None] * (q - p)).all())

    def _taut_length(self, path):
        pts = self.domain.points[path]
        total = 0.0
        i = 0
        last = len(pts) - 1
        while i < last:
            j = i + 1
            while j < last and self.visible(pts[i], pts[j + 1]):
                j += 1
            total += float(np.linalg.norm(pts[j] - pts[i]))
            i = j
        return total


def inner_distance(graph, a, b, refine=True):
    """Inner distance between nodes ``a`` and ``b``.

    The graph shortest path is computed with Dijkstra. With
    ``refine=True`` the path is pulled taut by replacing runs of nodes
    with straight segments that stay inside the domain; both directions
    are tried and the shorter result kept, so the value is symmetric and
    never below the Euclidean distance. ``refine=False`` returns the plain
    graph distance, which is an exact metric on the node set. The search
    always starts from the smaller node index, so the result is bitwise
    symmetric in ``a`` and ``b``.
    """
    a, b = sorted((graph.node(a), graph.node(b)))
    if a == b:
        return 0.0
    if graph.labels[a] != graph.labels[b]:
        return math.inf
    path, dist = graph.shortest_path(a, b)
    if not refine:
        return dist
    return min(graph._taut_length(path), graph._taut_length(path[::-1]), dist)


def inner_distances_from(graph, a, targets, refine=True):
    """Inner distances from node ``a`` to each of ``targets`` with one Dijkstra solve.

    Refined values pull each path taut from ``a``'s side only.
    """
    a = graph.node(a)
    targets = np.asarray(targets, dtype=np.int64)
    dist, pred = dijkstra(graph.matrix, directed=False, indices=a, return_predecessors=True)
    out = dist[targets].astype(float)
    if not refine:
        return out
    for m, b in enumerate(targets):
        if b == a or not np.isfinite(out[m]):
            continue
        path = [int(b)]
        while path[-1] != a:
            path.append(int(pred[path[-1]]))
        out[m] = min(out[m], graph._taut_length(path[::-1]))
    return out


def _check_finite(u, nodes):
    bad = ~np.isfinite(u[nodes])
    if bad.any():
        raise NonFiniteValue(f"u is not finite at node {int(np.asarray(nodes)[bad][0])}")


def _nodal(u, graph):
    if callable(u):
        u = u(graph.domain.points)
    u = np.broadcast_to(np.asarray(u, dtype=float), (graph.n_nodes,))
    return u


def inner_lipschitz_seminorm(graph, u, mode=EDGE_QUOTIENT, k=10_000, seed=0):
    """Lower estimate of the inner-Lipschitz seminorm of nodal ``u``.

    ``EdgeQuotient`` maximizes ``|u(a) - u(b)| / |a - b|`` over graph
    edges. ``AllPairs`` maximizes ``|u(a) - u(b)| / d_X(a, b)`` over ``k``
    seeded random pairs, using graph distances from about ``sqrt(k)``
    sources.
    """
    u = _nodal(u, graph)
    if mode == EDGE_QUOTIENT:
        e = graph.edges
        if len(e) == 0:
            return 0.0
        _check_finite(u, np.unique(e))
        return float(np.max(np.abs(u[e[:, 0]] - u[e[:, 1]]) / graph.edge_lengths))
    if mode != ALL_PAIRS:
        raise InvalidArgument(f"mode must be {EDGE_QUOTIENT!r} or {ALL_PAIRS!r}")
    if k < 1:
        raise InvalidArgument("k must be >= 1")
    rng = np.random.default_rng(seed)
    n_src = min(graph.n_nodes, max(1, int(math.isqrt(k))))
    per = int(math.ceil(k / n_src))
    sources = rng.choice(graph.n_nodes, size=n_src, replace=False)
    best = 0.0
    for s, row in zip(sources, graph.graph_distances(sources)):
        targets = rng.integers(0, graph.n_nodes, size=per)
        d = row[targets]
        ok = np.isfinite(d) & (d > 0)
        if not ok.any():
            continue
        t = targets[ok]
        _check_finite(u, np.append(t, s))
        best = max(best, float(np.max(np.abs(u[t] - u[s]) / d[ok])))
    return best


def cech_norm(graph, u, sup_u=None, mode=EDGE_QUOTIENT, **kw):
    """``sup |u|`` plus the inner-Lipschitz seminorm."""
    vals = _nodal(graph=graph, u=u)
    if sup_u is None:
        _check_finite(vals, np.arange(graph.n_nodes))
        sup_u = float(np.max(np.abs(vals)))
    return float(sup_u) + inner_lipschitz_seminorm(graph, vals, mode, **kw)


def distance_matrix(graph, nodes, refine=False, path=None, allow_large=False):
    """Pairwise inner distances among ``nodes``; optionally written as CSV.

    Size grows quadratically; more than 2000 nodes needs ``allow_large``.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    if len(nodes) > 2000 and not allow_large:
        raise InvalidArgument("distance matrix over 2000 nodes requires allow_large=True")
    if len(nodes) > 500:
        warnings.warn(f"distance matrix of {len(nodes)}^2 entries", stacklevel=2)
    if refine:
        D = np.zeros((len(nodes), len(nodes)))
        for i in range(len(nodes)):
            for j in range(i + 1, len(nodes)):
                D[i, j] = D[j, i] = inner_distance(graph, nodes[i], nodes[j], refine=True)
    else:
        D = graph.graph_distances(nodes)[:, nodes]
    if path is not None:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node"] + [int(n) for n in nodes])
        for n, row in zip(nodes, D):
            w.writerow([int(n)] + [f"{v:.12g}" for v in row])
        with open(path, "w", newline="") as fh:
            fh.write(buf.getvalue())
    return D
