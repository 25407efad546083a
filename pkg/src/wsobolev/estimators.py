"""Scikit-learn style wrappers around the Dirac-representer kernel."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .exceptions import InvalidArgument
from .geometry import DomainSpec, build_grid_domain
from .kernel import _solver, min_norm_interpolant
from .measure import WeightField
from .sobolev import assemble_operator


def check_points(X, dim):
    """Validate an ``(n, dim)`` array of finite coordinates."""
    X = check_array(X, dtype=float, ensure_2d=True)
    if X.shape[1] != dim:
        raise InvalidArgument(f"expected {dim} coordinate columns, got {X.shape[1]}")
    return X


def _spec(domain):
    if isinstance(domain, DomainSpec):
        return domain
    if isinstance(domain, dict):
        return DomainSpec.from_dict(domain)
    if isinstance(domain, str):
        return DomainSpec(domain)
    raise InvalidArgument("domain must be a DomainSpec, a dict or a kind name")


class _KernelBase(BaseEstimator):
    def __init__(self, domain="Square", h=1 / 32, k=2, weight=None, underflow="drop"):
        self.domain = domain
        self.h = h
        self.k = k
        self.weight = weight
        self.underflow = underflow

    def _build(self):
        spec = _spec(self.domain)
        grid = build_grid_domain(spec, self.h)
        w = WeightField.constant(grid) if self.weight is None else WeightField.on_grid(grid, self.weight)
        self.grid_ = grid
        self.operator_ = assemble_operator(grid, w, int(self.k), underflow=self.underflow)
        self.n_features_in_ = grid.dim

    def _snap(self, X):
        """Nearest support node for each row of ``X``."""
        X = check_points(X, self.grid_.dim)
        support = self.operator_.support
        pts = self.grid_.points[support]
        out = np.empty(len(X), dtype=np.int64)
        for i, x in enumerate(X):
            out[i] = support[int(np.argmin(np.sum((pts - x) ** 2, axis=1)))]
        return out


class DiracFeatureMap(TransformerMixin, _KernelBase):
    """Map points to their representers ``phi_x`` over the support nodes.

    Inner products of the rows in the operator's metric reproduce the
    kernel, so ``transform(X) @ A @ transform(Y).T == K(X, Y)``.
    """

    def fit(self, X=None, y=None):
        self._build()
        return self

    def transform(self, X):
        check_is_fitted(self, "operator_")
        nodes = self._snap(X)
        op = self.operator_
        E = np.zeros((op.size, len(nodes)))
        E[[op.local_index(int(n)) for n in nodes], np.arange(len(nodes))] = 1.0
        return _solver(op).solve(E).T

    def kernel(self, X, Y=None):
        """Kernel values between the snapped nodes of ``X`` and ``Y``."""
        check_is_fitted(self, "operator_")
        cols = self._snap(X if Y is None else Y)
        return self.transform(X)[:, [self.operator_.local_index(int(n)) for n in cols]]


class KernelInterpolator(RegressorMixin, _KernelBase):
    """Minimum-norm interpolation of nodal data in the weighted Sobolev space."""

    def fit(self, X, y):
        self._build()
        nodes = self._snap(X)
        y = np.asarray(y, dtype=float).ravel()
        if len(y) != len(nodes):
            raise InvalidArgument("X and y differ in length")
        if len(np.unique(nodes)) != len(nodes):
            raise InvalidArgument("two samples snap to the same grid node; refine h")
        self.interpolant_ = min_norm_interpolant(self.operator_, nodes, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "interpolant_")
        nodes = self._snap(X)
        return self.interpolant_.values[[self.operator_.local_index(int(n)) for n in nodes]]
