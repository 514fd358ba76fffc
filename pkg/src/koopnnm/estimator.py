"""scikit-learn style front end for one nonlinear normal mode."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dynamics import spectral_trajectory
from .exceptions import ContractError
from .koopman import MAX_ORDER, compute_identity_modes
from .manifold import eval_states, invert_point, pde_residual
from .polyfield import PolynomialVectorField, jacobian_at_origin
from .spectral import SpectralDecomposition, decompose

MODE_NAMES = {"in-phase": 0, "out-of-phase": 1}


def resolve_mode(dec: SpectralDecomposition, mode):
    """Eigen-index pair (or single real index) selected by ``mode``.

    ``mode`` is a frequency-rank name (``"in-phase"`` is the slowest pair,
    ``"out-of-phase"`` the next), an eigenvalue index, or an explicit pair.
    """
    if isinstance(mode, str):
        if mode in MODE_NAMES:
            return dec.pair_by_frequency_rank(MODE_NAMES[mode])
        try:
            mode = int(mode)
        except ValueError:
            raise ContractError(
                f"mode must be 'in-phase', 'out-of-phase' or an index, got {mode!r}"
            ) from None
    if isinstance(mode, (tuple, list)):
        return tuple(int(i) for i in mode)
    mode = int(mode)
    if not 0 <= mode < dec.dimension:
        raise ContractError(f"mode index {mode} out of range [0, {dec.dimension})")
    if dec.eigenvalues[mode].imag == 0:
        return mode
    return dec.pair_containing(mode)


class KoopmanNNM(TransformerMixin, BaseEstimator):
    """Invariant manifold of one mode of a polynomial vector field.

    Parameters
    ----------
    field : PolynomialVectorField
        System ``dx/dt = f(x)`` with a stable equilibrium at the origin.
    order : int
        Truncation order of the mode expansion.
    mode : str, int or pair
        Which eigenvalue pair to follow, see :func:`resolve_mode`.
    resonance_tol : float, optional
        Resonance threshold; ``1e-8 * max|lambda|`` when omitted.
    solver : {"auto", "eigenbasis", "dense"}
    invert_tol : float
        Relative residual accepted by :meth:`transform`.

    Attributes
    ----------
    decomposition_ : SpectralDecomposition
    table_ : KoopmanModeTable
    n_features_in_ : int
    """

    def __init__(
        self,
        field=None,
        order=50,
        mode="in-phase",
        resonance_tol=None,
        solver="auto",
        invert_tol=1e-6,
    ):
        self.field = field
        self.order = order
        self.mode = mode
        self.resonance_tol = resonance_tol
        self.solver = solver
        self.invert_tol = invert_tol

    def fit(self, X=None, y=None):
        """Compute the mode table; ``X`` and ``y`` are ignored.

        The model is determined by ``field`` alone, so there is no data to
        learn from; the signature exists for pipeline compatibility.
        """
        if not isinstance(self.field, PolynomialVectorField):
            raise ContractError("field must be a PolynomialVectorField")
        if not 1 <= int(self.order) <= MAX_ORDER:
            raise ContractError(f"order must lie in [1, {MAX_ORDER}], got {self.order}")
        self.decomposition_ = decompose(jacobian_at_origin(self.field))
        pair = resolve_mode(self.decomposition_, self.mode)
        self.table_ = compute_identity_modes(
            self.field,
            self.decomposition_,
            pair,
            int(self.order),
            resonance_tol=self.resonance_tol,
            solver=self.solver,
        )
        self.n_features_in_ = self.field.dimension
        return self

    def transform(self, X):
        """States ``(m, n)`` to manifold coordinates ``(m, 2)``."""
        check_is_fitted(self, "table_")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != self.n_features_in_:
            raise ContractError(f"expected {self.n_features_in_} columns, got {X.shape[1]}")
        return np.array([invert_point(self.table_, x, rel_tol=self.invert_tol)[0] for x in X])

    def inverse_transform(self, X):
        """Manifold coordinates ``(m, 2)`` to states ``(m, n)``."""
        check_is_fitted(self, "table_")
        X = check_array(X, ensure_min_samples=1)
        if X.shape[1] != 2:
            raise ContractError(f"expected (u, v) columns, got {X.shape[1]}")
        return eval_states(self.table_, X[:, 0] + 1j * X[:, 1])

    def residual(self, X):
        """Invariance residual at manifold coordinates ``(m, 2)``."""
        check_is_fitted(self, "table_")
        X = check_array(X, ensure_min_samples=1)
        return pde_residual(self.field, self.table_, X[:, 0] + 1j * X[:, 1])

    def trajectory(self, uv0, times):
        """Motion on the manifold from ``(u, v)`` sampled at ``times``."""
        check_is_fitted(self, "table_")
        u, v = (float(c) for c in uv0)
        return spectral_trajectory(self.table_, complex(u, v), times)
