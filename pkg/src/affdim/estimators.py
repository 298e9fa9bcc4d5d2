"""scikit-learn style adapter around the entropy-dimension slope."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .entropy import DyadicFrame, entropy_dimension


class EntropyDimensionEstimator(BaseEstimator):
    """Fit ``dimension_`` as the slope of ``H(X, D_n)`` over ``n`` in ``window``.

    ``X`` is an ``(N, 1)`` or ``(N, 2)`` array of samples. With
    ``check_bias=True`` the finest level must have at most ``N / 10``
    occupied cells.
    """

    def __init__(self, window=(6, 11), check_bias=True):
        self.window = window
        self.check_bias = check_bias

    def fit(self, X, y=None):
        X = check_array(X, ensure_min_samples=2)
        if X.shape[1] not in (1, 2):
            raise ValueError("X must have one or two columns")
        pts = X[:, 0] if X.shape[1] == 1 else X
        frame = DyadicFrame.standard1d(0) if X.shape[1] == 1 else DyadicFrame.standard2d(0)
        self.dimension_, self.fit_ = entropy_dimension(pts, self.window, frame, self.check_bias)
        self.levels_ = np.asarray(self.fit_.levels)
        self.bits_ = np.asarray(self.fit_.bits)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X=None):
        """Per-level entropies in bits, one row."""
        check_is_fitted(self, "dimension_")
        return self.bits_[None, :]
