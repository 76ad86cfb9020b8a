"""scikit-learn compatible wrapper around the Likert scoring kernel."""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .exceptions import InvalidInputError
from .validation import check_label_logprobs, check_temperature


class LikertScorer(BaseEstimator):
    """Turn per-label log-probabilities into Likert scores.

    Each row of ``X`` holds the raw log-probabilities (or logits) of the answer
    labels, one column per score in ascending order, ``-inf`` for labels the
    model never produced. ``predict`` returns the expected-value score at
    ``temperature`` or, with ``method="greedy"``, the score of the most
    probable label.

    Parameters
    ----------
    temperature : float, default=10.0
        Divisor applied to the label log-probabilities before renormalizing.
    method : {"expected", "greedy"}, default="expected"
    scores : array-like of shape (n_labels,), default=None
        Score of each column; ``1..n_labels`` when omitted.

    Examples
    --------
    >>> import numpy as np
    >>> X = np.log([[0.01, 0.01, 0.02, 0.9, 0.06]])
    >>> LikertScorer(method="greedy").fit(X).predict(X)
    array([4.])
    """

    def __init__(self, temperature=10.0, method="expected", scores=None):
        self.temperature = temperature
        self.method = method
        self.scores = scores

    def fit(self, X, y=None):
        X = check_label_logprobs(X)
        check_temperature(self.temperature)
        if self.method not in ("expected", "greedy"):
            raise InvalidInputError(f"method must be 'expected' or 'greedy', got {self.method!r}")
        if self.scores is None:
            self.scores_ = np.arange(1, X.shape[1] + 1, dtype=np.float64)
        else:
            self.scores_ = np.asarray(self.scores, dtype=np.float64)
            if self.scores_.shape != (X.shape[1],):
                raise InvalidInputError("scores must have one entry per label column")
        self.n_features_in_ = X.shape[1]
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_label_logprobs(X, self.n_features_in_)
        z = X / check_temperature(self.temperature)
        z = z - z.max(axis=1, keepdims=True)
        with np.errstate(under="ignore"):
            p = np.exp(z)
        return p / p.sum(axis=1, keepdims=True)

    def predict(self, X):
        proba = self.predict_proba(X)
        if self.method == "expected":
            return proba @ self.scores_
        best = proba == proba.max(axis=1, keepdims=True)
        return np.where(best, self.scores_, np.inf).min(axis=1)

    def score(self, X, y):
        """Pearson correlation between predictions and ``y``."""
        from .stats import pearson

        return pearson(self.predict(X), y)
