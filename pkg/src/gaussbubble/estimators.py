"""scikit-learn style wrappers around the functional API.

The "training data" of these estimators is a volume vector (or a mesh); the
fitted attributes are the solved geometry. They exist so the computations
compose with ``get_params``/``set_params``, ``clone`` and parameter sweeps.
"""

import numpy as np
from sklearn.base import BaseEstimator, ClusterMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import frontflow, simplicial, stability
from ._validation import check_volume_vector


class SimplicialBubbles(ClusterMixin, TransformerMixin, BaseEstimator):
    """Fit the simplicial partition whose sectors carry prescribed Gaussian volumes.

    Parameters
    ----------
    tol : float
        Acceptable max-norm volume residual of the shift solve.
    max_iter : int
        Newton iteration budget.

    Attributes
    ----------
    shift_ : ndarray of shape (m - 1,)
    partition_ : SimplicialPartition
    cost_ : float
    cost_error_bound_ : float
    multipliers_ : ndarray of shape (m,)
    interface_matrix_ : ndarray of shape (m, m)
    volumes_ : ndarray of shape (m,)
    """

    def __init__(self, tol=1e-9, max_iter=50):
        self.tol = tol
        self.max_iter = max_iter

    def fit(self, a, y=None):
        a = check_volume_vector(a)
        sol = simplicial.solve_shift(a, tol=self.tol, max_iter=self.max_iter)
        m = a.size
        self.shift_ = sol.y
        self.partition_ = sol.partition()
        self.volumes_ = sol.volumes
        c = simplicial.cost(a, tol=self.tol)
        self.cost_ = c.value
        self.cost_error_bound_ = c.abs_error_bound
        self.multipliers_ = simplicial.multipliers(sol.y, m).lam
        self.interface_matrix_ = simplicial.interface_matrix(sol.y, m).K
        self.n_features_in_ = m - 1
        return self

    def transform(self, X):
        """Sector scores ``<x - y, z_i>``; the argmax is the sector label."""
        check_is_fitted(self, "partition_")
        X = check_array(X)
        return self.partition_.scores(X)

    def predict(self, X):
        """Sector labels (1..m) of the rows of ``X``."""
        return np.argmax(self.transform(X), axis=1) + 1

    def fit_predict(self, a, X=None):
        # the volume vector is not a point cloud, so fit_predict needs explicit points
        if X is None:
            raise TypeError("fit_predict needs the points to label")
        return self.fit(a).predict(X)


class LineOptimizer1D(BaseEstimator):
    """Best labeled interval partition of the line for a volume vector."""

    def __init__(self, max_breaks=4, seed=0):
        self.max_breaks = max_breaks
        self.seed = seed

    def fit(self, a, y=None):
        a = check_volume_vector(a)
        res = frontflow.optimize_1d(a.size, a, self.max_breaks, self.seed)
        self.partition_ = res.best
        self.cost_ = res.cost
        self.breakpoints_ = np.array(res.best.breakpoints)
        self.labels_ = np.array(res.best.labels)
        return self

    def predict(self, x):
        check_is_fitted(self, "partition_")
        x = np.asarray(x, dtype=float).reshape(-1)
        return self.labels_[np.searchsorted(self.breakpoints_, x)]


class NetworkDescent(BaseEstimator):
    """Volume-constrained descent of a three-set polygonal network."""

    def __init__(self, steps=5000, seed=7, tol=1e-7, jitter=0.1, n_per_ray=60):
        self.steps = steps
        self.seed = seed
        self.tol = tol
        self.jitter = jitter
        self.n_per_ray = n_per_ray

    def fit(self, a, y=None, init=None):
        a = check_volume_vector(a, 3)
        if init is None:
            init = frontflow.jitter(
                frontflow.tripod_network(n_per_ray=self.n_per_ray), self.jitter, self.seed
            )
        res = frontflow.optimize_2d(a, init, steps=self.steps, seed=self.seed, tol=self.tol)
        self.network_ = res.network
        self.cost_ = res.cost
        self.trace_ = np.array(res.trace)
        self.status_ = res.status
        self.residuals_ = frontflow.first_variation_residual(res.network)
        return self


class StabilitySpectrum(BaseEstimator):
    """Fundamental tone of a curve-network mesh."""

    def __init__(self, constrained=False, n_eigs=5):
        self.constrained = constrained
        self.n_eigs = n_eigs

    def fit(self, mesh, y=None):
        rep = stability.fundamental_tone(mesh, self.constrained, self.n_eigs)
        self.tone_ = rep.tone
        self.eigenvalues_ = rep.top_eigenvalues
        self.eigenfield_ = rep.argmax_field
        self.sign_constant_ = rep.sign_constant
        return self
