"""Discrete weighted Sobolev norms and the quadratic-form operator.

Derivatives are finite differences along lattice lines. A derivative of
order ``j`` uses a centered stencil of ``2*floor((j+1)/2) + 1`` points in
the interior and a one-sided window of the same size (or the whole line,
when it is shorter) near the frontier. Mixed partials are compositions of
1-D difference operators.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import RegularGridInterpolator

from .exceptions import (
    EmptySlice,
    EmptySupport,
    InvalidArgument,
    NonFiniteValue,
    StencilUnderflow,
)
from .geometry import GridDomain, SliceQuadrature, sphere_slice
from .measure import WeightField

UNDERFLOW_POLICIES = ("raise", "drop")


@dataclass(frozen=True)
class DifferenceStencil:
    """Weights of a 1-D difference formula on unit spacing.

    ``coefficients[m]`` multiplies the value at integer ``offsets[m]``;
    divide by ``h**order`` for spacing ``h``.
    """

    order: int
    offsets: tuple
    coefficients: np.ndarray

    @property
    def accuracy(self):
        return len(self.offsets) - self.order

    def apply(self, values, h=1.0):
        return float(np.dot(self.coefficients, values)) / h**self.order

    def moment_errors(self, degree=None):
        """Deviation from exactness on ``x**q / q!`` for ``q <= degree``."""
        degree = len(self.offsets) - 1 if degree is None else degree
        off = np.asarray(self.offsets, dtype=float)
        errs = []
        for q in range(degree + 1):
            target = 1.0 if q == self.order else 0.0
            errs.append(abs(np.dot(self.coefficients, off**q) / math.factorial(q) - target))
        return np.array(errs)


def difference_stencil(order, offsets):
    """Solve the moment conditions for a derivative of ``order`` on ``offsets``."""
    offsets = tuple(int(o) for o in offsets)
    n = len(offsets)
    if order < 0:
        raise InvalidArgument("derivative order must be >= 0")
    if n < order + 1:
        raise StencilUnderflow(f"{n} points cannot resolve a derivative of order {order}")
    if len(set(offsets)) != n:
        raise InvalidArgument("stencil offsets must be distinct")
    off = np.asarray(offsets, dtype=float)
    V = np.vander(off, n, increasing=True).T / np.array([math.factorial(q) for q in range(n)])[:, None]
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return DifferenceStencil(order, offsets, np.linalg.solve(V, rhs))


def interior_width(order):
    return 2 * ((order + 1) // 2) + 1


def _check_policy(underflow):
    if underflow not in UNDERFLOW_POLICIES:
        raise InvalidArgument(f"underflow must be one of {UNDERFLOW_POLICIES}")


@lru_cache(maxsize=64)
def derivative_matrix(domain, axis, order, underflow="raise"):
    """Sparse matrix of the order-``order`` difference along ``axis``.

    Nodes whose lattice line is too short for any formula raise
    :class:`StencilUnderflow` (``underflow="raise"``) or get a zero row
    (``underflow="drop"``).
    """
    _check_policy(underflow)
    n_nodes = domain.n_nodes
    if order == 0:
        return sp.identity(n_nodes, format="csr")
    if not 0 <= axis < domain.dim:
        raise InvalidArgument(f"axis {axis} out of range")
    _, run_len, pos = domain.lines(axis)
    width = interior_width(order)
    n = np.minimum(run_len, width)
    ok = run_len >= order + 1
    if not ok.all() and underflow == "raise":
        bad = int(np.flatnonzero(~ok)[0])
        raise StencilUnderflow(
            f"node {domain.points[bad].tolist()} has {int(run_len[bad])} points along axis {axis}; "
            f"order {order} needs {order + 1}"
        )
    first = np.clip(pos - (n - 1) // 2, 0, run_len - n)
    shift = first - pos
    e = np.zeros(domain.dim, dtype=np.int64)
    e[axis] = 1
    rows, cols, vals = [], [], []
    keys = np.stack([n, shift], axis=1)[ok]
    idx_ok = np.flatnonzero(ok)
    if len(idx_ok):
        uniq, inv = np.unique(keys, axis=0, return_inverse=True)
        inv = inv.ravel()
        for g, (gn, gs) in enumerate(uniq):
            members = idx_ok[inv == g]
            st = difference_stencil(order, range(gs, gs + gn))
            coef = st.coefficients / domain.h**order
            for m, o in enumerate(st.offsets):
                nb = domain.lookup(domain.ij[members] + o * e)
                rows.append(members)
                cols.append(nb)
                vals.append(np.full(len(members), coef[m]))
    if rows:
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
    else:
        rows = cols = np.zeros(0, dtype=np.int64)
        vals = np.zeros(0)
    return sp.csr_matrix((vals, (rows, cols)), shape=(n_nodes, n_nodes))


def multi_indices(dim, order):
    """Multi-indices ``alpha`` with ``|alpha| = order`` (sorted, distinct)."""
    out = []
    for combo in combinations_with_replacement(range(dim), order):
        alpha = [0] * dim
        for a in combo:
            alpha[a] += 1
        out.append(tuple(alpha))
    return sorted(set(out), reverse=True)


def mixed_derivative_matrix(domain, alpha, underflow="raise"):
    """``D^alpha`` as a product of 1-D difference matrices (last axis applied first)."""
    M = None
    for axis in reversed(range(domain.dim)):
        if alpha[axis] == 0:
            continue
        D = derivative_matrix(domain, axis, alpha[axis], underflow)
        M = D if M is None else D @ M
    return sp.identity(domain.n_nodes, format="csr") if M is None else M.tocsr()


def _nodal(u, domain):
    if callable(u):
        vals = np.asarray(u(domain.points), dtype=float)
        return np.broadcast_to(vals, (domain.n_nodes,)).astype(float)
    vals = np.asarray(u, dtype=float).ravel()
    if len(vals) != domain.n_nodes:
        raise InvalidArgument(f"expected {domain.n_nodes} nodal values, got {len(vals)}")
    return vals


def _weight_and_volume(weight, domain):
    if weight.domain is not None and weight.domain is not domain:
        if weight.domain.n_nodes != domain.n_nodes:
            raise InvalidArgument("weight field lives on a different grid")
    if len(weight) != domain.n_nodes:
        raise InvalidArgument("weight field size does not match the domain")
    return weight.finite_values() * domain.cell_volume


def level_derivatives(u, domain, order, underflow="raise"):
    """Array ``(n_nodes, n_alpha)`` of ``D^alpha u`` for ``|alpha| = order``."""
    vals = _nodal(u, domain)
    if order == 0:
        return vals[:, None]
    cols = []
    cache = {}
    for alpha in multi_indices(domain.dim, order):
        v = vals
        for axis in reversed(range(domain.dim)):
            if alpha[axis] == 0:
                continue
            key = alpha[axis:]
            if key in cache:
                v = cache[key]
                continue
            v = derivative_matrix(domain, axis, alpha[axis], underflow) @ v
            cache[key] = v
        cols.append(v)
    return np.stack(cols, axis=1)


def _level_norms(u, domain, weight, k, p, underflow):
    if p < 1 or not np.isfinite(p):
        raise InvalidArgument("p must be a finite real >= 1")
    if k < 0:
        raise InvalidArgument("k must be >= 0")
    wv = _weight_and_volume(weight, domain)
    supp = wv > 0
    out = []
    for i in range(k + 1):
        D = level_derivatives(u, domain, i, underflow)
        mag = np.linalg.norm(D, axis=1) if D.shape[1] > 1 else np.abs(D[:, 0])
        if not np.isfinite(mag[supp]).all():
            raise NonFiniteValue(f"derivatives of order {i} are not finite on the support")
        out.append(float(np.sum(mag[supp] ** p * wv[supp])) ** (1 / p))
    return out


def lp_norm(u, weight, p=2, region=None, domain=None):
    """Weighted ``L^p`` norm over the grid, or over a sphere slice.

    ``region`` may be a :class:`SliceQuadrature`; then ``u`` and ``weight``
    are evaluated at the slice points (``u`` callable or nodal, in which case
    it is interpolated).
    """
    if p < 1 or not np.isfinite(p):
        raise InvalidArgument("p must be a finite real >= 1")
    domain = domain if domain is not None else weight.domain
    if isinstance(region, SliceQuadrature):
        uv = evaluate_off_grid(u, domain, region.points)
        fv = weight(region.points)
        if not np.isfinite(uv).all():
            raise NonFiniteValue("u is not finite on the slice")
        fv = np.where(np.isinf(fv), 0.0, fv)
        return float(np.sum(np.abs(uv) ** p * fv * region.weights)) ** (1 / p)
    if region not in (None, "all"):
        raise InvalidArgument("region must be 'all' or a SliceQuadrature")
    if domain is None:
        raise InvalidArgument("a grid domain is required")
    return _level_norms(u, domain, weight, 0, p, "drop")[0]


def sobolev_norm(u, domain, weight, k, p=2, underflow="raise", combine="sum"):
    """``sum_{i<=k} ||D^i u||_{L^p_f}``.

    ``|D^i u|`` is the Euclidean norm of the vector of order-``i``
    partials. ``combine="quadratic"`` returns ``sqrt(sum_i ||D^i u||^2)``
    instead (the form induced by :class:`SobolevOperator` when ``p = 2``).
    """
    levels = _level_norms(u, domain, weight, k, p, underflow)
    if combine == "sum":
        return float(sum(levels))
    if combine == "quadratic":
        return float(math.sqrt(sum(v * v for v in levels)))
    raise InvalidArgument("combine must be 'sum' or 'quadratic'")


def sobolev_levels(u, domain, weight, k, p=2, underflow="raise"):
    """The per-level norms ``||D^i u||_{L^p_f}`` for ``i = 0..k``."""
    return _level_norms(u, domain, weight, k, p, underflow)


@dataclass(frozen=True, eq=False)
class SobolevOperator:
    """``A = sum_{|alpha|<=k} D_alpha^T W D_alpha`` restricted to the support of ``f``."""

    domain: GridDomain
    weight: WeightField
    k: int
    matrix: sp.csr_matrix
    support: np.ndarray
    permutation: np.ndarray

    @property
    def shape(self):
        return self.matrix.shape

    @property
    def size(self):
        return self.matrix.shape[0]

    def restrict(self, u):
        """Nodal vector (full grid or callable) restricted to the support nodes."""
        if callable(u):
            return _nodal(u, self.domain)[self.support]
        u = np.asarray(u, dtype=float).ravel()
        if len(u) == self.size:
            return u
        if len(u) == self.domain.n_nodes:
            return u[self.support]
        raise InvalidArgument("vector size matches neither the support nor the grid")

    def inner(self, u, v):
        u, v = self.restrict(u), self.restrict(v)
        return float(u @ (self.matrix @ v))

    def norm(self, u):
        return math.sqrt(max(self.inner(u, u), 0.0))

    def local_index(self, node):
        pos = np.searchsorted(self.support, node)
        if pos >= len(self.support) or self.support[pos] != node:
            return -1
        return int(pos)

    def to_coo_text(self, path=None):
        coo = sp.triu(self.matrix).tocoo()
        lines = [f"{r} {c} {v:.17g}" for r, c, v in zip(coo.row, coo.col, coo.data)]
        text = "\n".join(lines) + "\n"
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def assemble_operator(domain, weight, k, underflow="raise"):
    """Assemble the weighted ``W^{k,2}`` quadratic form.

    Raises
    ------
    EmptySupport
        If ``f`` vanishes on every node.
    """
    from scipy.sparse.csgraph import reverse_cuthill_mckee

    if k < 0:
        raise InvalidArgument("k must be >= 0")
    wv = _weight_and_volume(weight, domain)
    support = np.flatnonzero(wv > 0)
    if len(support) == 0:
        raise EmptySupport("the weight vanishes on every node")
    W = sp.diags(wv)
    A = None
    for i in range(k + 1):
        for alpha in multi_indices(domain.dim, i):
            D = mixed_derivative_matrix(domain, alpha, underflow)
            term = (D.T @ W @ D).tocsr()
            A = term if A is None else A + term
    A = A[support][:, support].tocsr()
    A = ((A + A.T) * 0.5).tocsr()
    A.sum_duplicates()
    perm = reverse_cuthill_mckee(A, symmetric_mode=True)
    return SobolevOperator(domain, weight, int(k), A, support, np.asarray(perm))


def evaluate_off_grid(u, domain, points):
    """Evaluate ``u`` at arbitrary points.

    Callables are evaluated directly; nodal vectors are interpolated
    bilinearly on the lattice, falling back to the nearest node where a
    neighbor lies outside the domain.
    """
    points = np.atleast_2d(points)
    if callable(u):
        return np.broadcast_to(np.asarray(u(points), dtype=float), (len(points),)).astype(float)
    vals = _nodal(u, domain)
    grid = np.full(domain.index_grid.shape, np.nan)
    inside = domain.index_grid >= 0
    grid[inside] = vals[domain.index_grid[inside]]
    axes = [(np.arange(s) + o) * domain.h for s, o in zip(grid.shape, domain.origin)]
    interp = RegularGridInterpolator(axes, grid, bounds_error=False, fill_value=np.nan)
    out = interp(points)
    miss = ~np.isfinite(out)
    if miss.any():
        d = np.linalg.norm(domain.points[None, :, :] - points[miss][:, None, :], axis=2)
        out[miss] = vals[np.argmin(d, axis=1)]
    return out


@dataclass(frozen=True)
class SliceRow:
    eta: float
    slice_norm: float
    bound: float
    ratio: float


def gradient_norm(u, domain, weight, p, underflow="drop"):
    """``||grad u||_{L^p_f}`` on the grid."""
    return _level_norms(u, domain, weight, 1, p, underflow)[1]


def slice_lemma_ratio(domain, weight, u, p, eta_list, m=None, tol=1e-10, underflow="drop"):
    """Slice norms of ``u`` against ``eta**((a-1)/p) * ln(1/eta)**((m-1)/m) * ||grad u||``.

    ``a = min(m, p)`` with ``m`` the dimension of the domain.
    """
    if p < 1:
        raise InvalidArgument("p must be >= 1")
    m = domain.dim if m is None else m
    a = min(m, p)
    g = gradient_norm(u, domain, weight, p, underflow)
    rows = []
    for eta in eta_list:
        eta = float(eta)
        if not 0 < eta < 1:
            raise InvalidArgument("eta must lie in (0, 1)")
        sl = sphere_slice(domain, eta, tol)
        s = lp_norm(u, weight, p, region=sl, domain=domain)
        bound = eta ** ((a - 1) / p) * math.log(1 / eta) ** ((m - 1) / m) * g
        rows.append(SliceRow(eta, s, bound, s / bound if bound > 0 else 0.0))
    return rows


def integrated_slice_norm(domain, weight, u, p, eta_max, n_eta=64):
    """``(int_0^eta_max ||u||^p_{L^p(N^eta)} d eta)^{1/p}`` by Gauss-Legendre in ``eta``."""
    x, w = np.polynomial.legendre.leggauss(n_eta)
    etas = 0.5 * eta_max * (x + 1)
    w = 0.5 * eta_max * w
    total = 0.0
    for eta, we in zip(etas, w):
        try:
            sl = sphere_slice(domain, float(eta))
        except EmptySlice:
            continue
        total += we * lp_norm(u, weight, p, region=sl, domain=domain) ** p
    return total ** (1 / p)
