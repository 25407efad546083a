"""Dirac representers and the induced kernel of a weighted Sobolev operator."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import norm as sparse_norm
from scipy.sparse.linalg import splu

from .exceptions import InvalidArgument, NotInSupport, SingularOperator
from .metric import inner_distance

MAX_DENSE_NODES = 2000
RESIDUAL_TOL = 1e-10


class RepresenterSolver:
    """Sparse LU of the Jacobi-equilibrated operator with iterative refinement.

    Convergence is judged by the normwise backward error
    ``||b - A x|| / (||A|| ||x|| + ||b||) <= 1e-10`` per column, which
    stays meaningful when the operator is badly conditioned (high ``k``,
    small ``h``). The plain relative residual is recorded in ``stats``.

    ``solve(B, extended=True)`` adds refinement steps whose residual is
    formed in ``longdouble``; this lowers the forward error, which a
    double-precision residual cannot push below ``cond(A) * eps``.
    """

    def __init__(self, op, max_refine=6):
        self.op = op
        A = op.matrix.tocsc()
        d = A.diagonal()
        if not (d > 0).all():
            raise SingularOperator("operator has a nonpositive diagonal entry")
        self.scale = 1.0 / np.sqrt(d)
        S = sp.diags(self.scale)
        self.A = A
        self.norm_A = float(sparse_norm(A, 1))
        try:
            self.lu = splu((S @ A @ S).tocsc(), permc_spec="MMD_AT_PLUS_A")
        except RuntimeError as exc:
            raise SingularOperator(f"factorization failed: {exc}") from exc
        self.max_refine = max_refine
        self._A_ld = None
        self.stats = {"solves": 0, "refinements": 0, "max_residual": 0.0, "max_backward_error": 0.0}

    def _raw(self, B):
        return self.scale[:, None] * self.lu.solve(self.scale[:, None] * B)

    def _errors(self, B, X):
        R = B - self.A @ X
        rn = np.linalg.norm(R, 1, axis=0)
        bn = np.linalg.norm(B, 1, axis=0)
        xn = np.linalg.norm(X, 1, axis=0)
        back = rn / np.maximum(self.norm_A * xn + bn, np.finfo(float).tiny)
        rel = rn / np.where(bn > 0, bn, 1.0)
        return R, back, rel

    def _extended(self, B, X, steps):
        if self._A_ld is None:
            self._A_ld = self.A.astype(np.longdouble)
        Xl = X.astype(np.longdouble)
        for _ in range(steps):
            R = np.asarray(B - self._A_ld @ Xl, dtype=float)
            Xl = Xl + self._raw(R)
        return np.asarray(Xl, dtype=float)

    def solve(self, B, extended=False):
        B = np.asarray(B, dtype=float)
        vec = B.ndim == 1
        B = B[:, None] if vec else B
        X = self._raw(B)
        R, back, rel = self._errors(B, X)
        it = 0
        while (back > RESIDUAL_TOL).any() and it < self.max_refine:
            X = X + self._raw(R)
            R, back, rel = self._errors(B, X)
            it += 1
        if extended:
            X = self._extended(B, X, 1)
            R, back, rel = self._errors(B, X)
            it += 1
        if not np.isfinite(X).all() or (back > RESIDUAL_TOL).any():
            raise SingularOperator(f"representer solve stalled at backward error {back.max():.3e}")
        self.stats["solves"] += B.shape[1]
        self.stats["refinements"] += it
        self.stats["max_residual"] = max(self.stats["max_residual"], float(rel.max()))
        self.stats["max_backward_error"] = max(self.stats["max_backward_error"], float(back.max()))
        return X[:, 0] if vec else X


def _solver(op):
    s = getattr(op, "_solver", None)
    if s is None:
        s = RepresenterSolver(op)
        object.__setattr__(op, "_solver", s)
    return s


def _local(op, node):
    loc = op.local_index(int(node))
    if loc < 0:
        raise NotInSupport(f"node {int(node)} is not in the support of the weight")
    return loc


def dirac_representer(op, x):
    """``phi_x`` over the support nodes of ``op``: the solution of ``A phi = e_x``."""
    loc = _local(op, x)
    e = np.zeros(op.size)
    e[loc] = 1.0
    return _solver(op).solve(e)


@dataclass
class KernelMatrix:
    nodes: np.ndarray
    K: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def asymmetry(self):
        return self.stats.get("asymmetry", 0.0)

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.K)

    def min_eigenvalue(self):
        return float(self.eigenvalues()[0])

    def is_psd(self, rtol=1e-10):
        ev = self.eigenvalues()
        return bool(ev[0] >= -rtol * np.abs(ev).max())

    def to_csv(self, path=None):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node"] + [int(n) for n in self.nodes])
        for n, row in zip(self.nodes, self.K):
            w.writerow([int(n)] + [f"{v:.12g}" for v in row])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def kernel_matrix(op, nodes):
    """Gram matrix ``K[i, j] = e_{x_j}^T A^{-1} e_{x_i}`` on the given grid nodes.

    ``stats["asymmetry"]`` records the relative asymmetry of the solved
    matrix before it is symmetrized.
    """
    nodes = np.asarray(nodes, dtype=np.int64).ravel()
    if len(nodes) == 0:
        raise InvalidArgument("no evaluation nodes")
    if len(nodes) > MAX_DENSE_NODES:
        raise InvalidArgument(f"dense kernels are limited to {MAX_DENSE_NODES} nodes")
    loc = np.array([_local(op, n) for n in nodes])
    solver = _solver(op)
    E = np.zeros((op.size, len(nodes)))
    E[loc, np.arange(len(nodes))] = 1.0
    X = solver.solve(E, extended=True)
    K = X[loc, :]
    scale = np.abs(K).max()
    asym = float(np.abs(K - K.T).max() / scale) if scale > 0 else 0.0
    K = 0.5 * (K + K.T)
    stats = dict(solver.stats)
    stats["asymmetry"] = asym
    return KernelMatrix(nodes, K, stats)


@dataclass(frozen=True)
class FeatureRow:
    x: int
    x_prime: int
    d_X: float
    norm: float
    ratio: float


def feature_distances(op, pairs, chunk=256):
    """``||phi_x - phi_x'||_A`` for node pairs, from ``A^{-1}(e_x - e_x')``."""
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    solver = _solver(op)
    out = np.empty(len(pairs))
    la = np.array([_local(op, a) for a in pairs[:, 0]], dtype=np.int64)
    lb = np.array([_local(op, b) for b in pairs[:, 1]], dtype=np.int64)
    for s in range(0, len(pairs), chunk):
        sl = slice(s, min(s + chunk, len(pairs)))
        m = sl.stop - sl.start
        B = np.zeros((op.size, m))
        B[la[sl], np.arange(m)] += 1.0
        B[lb[sl], np.arange(m)] -= 1.0
        X = solver.solve(B)
        q = np.einsum("ij,ij->j", B, X)
        out[sl] = np.sqrt(np.clip(q, 0.0, None))
    return out


def feature_lipschitz_ratio(op, graph, pairs, refine=True):
    """Rows ``(x, x', d_X, ||phi_x - phi_x'||_A, ratio)`` for the given node pairs.

    Pairs at inner distance zero are rejected.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        raise InvalidArgument("no pairs given")
    dists = np.array([inner_distance(graph, a, b, refine=refine) for a, b in pairs])
    if (dists == 0).any():
        raise InvalidArgument("pairs at inner distance 0 are not allowed")
    if not np.isfinite(dists).all():
        raise InvalidArgument("pairs must lie in one connected component")
    norms = feature_distances(op, pairs)
    return [FeatureRow(int(a), int(b), float(d), float(n), float(n / d)) for (a, b), d, n in zip(pairs, dists, norms)]


def feature_table_csv(rows, path=None):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["x", "x_prime", "d_X", "norm", "ratio"])
    for r in rows:
        w.writerow([r.x, r.x_prime, f"{r.d_X:.12g}", f"{r.norm:.12g}", f"{r.ratio:.12g}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


@dataclass
class Interpolant:
    nodes: np.ndarray
    coef: np.ndarray
    values: np.ndarray  # over the support nodes of the operator
    norm: float


def min_norm_interpolant(op, nodes, y):
    """Minimum ``A``-norm nodal function taking values ``y`` at ``nodes``."""
    y = np.asarray(y, dtype=float).ravel()
    km = kernel_matrix(op, nodes)
    if len(y) != len(km.nodes):
        raise InvalidArgument("one value per node is required")
    coef = np.linalg.solve(km.K, y)
    loc = np.array([_local(op, n) for n in km.nodes])
    E = np.zeros((op.size, len(loc)))
    E[loc, np.arange(len(loc))] = coef
    vals = _solver(op).solve(E).sum(axis=1)
    return Interpolant(km.nodes, coef, vals, math.sqrt(max(float(coef @ km.K @ coef), 0.0)))


def pair_sample(domain, n_pairs, seed=0, support=None, near_tip=0.5):
    """Axis-neighbour node pairs: the ones nearest the base point plus a seeded random draw."""
    n_pairs = int(n_pairs)
    if n_pairs < 1:
        raise InvalidArgument("n_pairs must be >= 1")
    edges = []
    for axis in range(domain.dim):
        off = np.zeros(domain.dim, dtype=np.int64)
        off[axis] = 1
        nb = domain.lookup(domain.ij + off)
        src = np.flatnonzero(nb >= 0)
        edges.append(np.stack([src, nb[src]], axis=1))
    edges = np.concatenate(edges)
    if support is not None:
        mask = np.zeros(domain.n_nodes, dtype=bool)
        mask[support] = True
        edges = edges[mask[edges[:, 0]] & mask[edges[:, 1]]]
    if len(edges) == 0:
        raise InvalidArgument("no neighbouring node pairs in the support")
    if len(edges) <= n_pairs:
        return edges
    mid = 0.5 * (domain.points[edges[:, 0]] + domain.points[edges[:, 1]])
    r = np.linalg.norm(mid - domain.spec.base_point, axis=1)
    n_tip = int(n_pairs * near_tip)
    order = np.argsort(r, kind="stable")
    tip = order[:n_tip]
    rest = order[n_tip:]
    rng = np.random.default_rng(seed)
    pick = rng.choice(rest, size=n_pairs - n_tip, replace=False)
    return edges[np.sort(np.concatenate([tip, pick]))]
