"""Pearson correlation and a shuffle-based test for a difference of correlations.

To ask whether a correlation ``r2`` is plausible when the true correlation is
``r1``, the reference series ``x`` (standardized) is mixed with random
permutations of itself::

    x_bar = r1 / sqrt(1 - r1**2) * x + shuffle(x)

``corr(x, x_bar)`` then concentrates around ``r1`` with the sampling spread of
a series of that length. The empirical distribution of those correlations is
the null; ``r2`` is significant when it falls in either 5% tail.
"""

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np

from .exceptions import DegenerateSeriesError, InvalidInputError
from .validation import check_series

ALPHA = 0.05
_CHUNK = 1000


@dataclass(frozen=True)
class MetricSeries:
    ids: tuple
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if len(self.ids) != len(self.values):
            raise InvalidInputError("ids and values differ in length")

    def __len__(self):
        return len(self.ids)


def pearson(x, y):
    x = check_series(x, "x")
    y = check_series(y, "y")
    if x.size != y.size:
        raise InvalidInputError(f"series lengths differ: {x.size} vs {y.size}")
    dx = x - x.mean()
    dy = y - y.mean()
    sxx = np.dot(dx, dx)
    syy = np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise DegenerateSeriesError("correlation is undefined for a constant series")
    r = np.dot(dx, dy) / np.sqrt(sxx * syy)
    return float(np.clip(r, -1.0, 1.0))


def _standardize(x):
    x = check_series(x, "x")
    sd = x.std()
    if sd == 0:
        raise DegenerateSeriesError("reference series is constant")
    return (x - x.mean()) / sd


@lru_cache(maxsize=16)
def _shuffle_dots(z_bytes, n_shuffles, seed):
    # depends on x and seed only, so testing several r against one series reuses it
    z = np.frombuffer(z_bytes)
    rng = np.random.default_rng(seed)
    out = np.empty(n_shuffles)
    for start in range(0, n_shuffles, _CHUNK):
        rows = min(_CHUNK, n_shuffles - start)
        out[start:start + rows] = rng.permuted(np.broadcast_to(z, (rows, z.size)), axis=1) @ z
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class EmpiricalCDF:
    samples: np.ndarray  # sorted

    def __call__(self, value):
        """Fraction of samples strictly below ``value``."""
        return float(np.searchsorted(self.samples, value, side="left") / self.samples.size)

    def mean(self):
        return float(self.samples.mean())

    def quantile(self, q):
        return float(np.quantile(self.samples, q))


def bootstrap_correlation_cdf(x, r, n_shuffles=10000, seed=0, term_order="corrected"):
    """Empirical distribution of ``corr(x, c*x + shuffle(x))`` with ``c = r/sqrt(1-r^2)``.

    ``term_order="literal"`` swaps the roles (``c*shuffle(x) + x``); that
    variant concentrates around ``sqrt(1 - r^2)`` rather than ``r`` and is kept
    for comparison only.
    """
    r = float(r)
    if not -1.0 < r < 1.0:
        raise InvalidInputError(f"|r| must be < 1, got {r}")
    if n_shuffles < 1000:
        raise InvalidInputError("use at least 1000 shuffles")
    if term_order not in ("corrected", "literal"):
        raise InvalidInputError(f"unknown term_order {term_order!r}")
    z = _standardize(x)
    zz = float(z @ z)
    d = _shuffle_dots(z.tobytes(), n_shuffles, seed)
    c = r / np.sqrt(1.0 - r * r)
    # shuffle(z) has the mean and norm of z, so every correlation follows from d = shuffle(z) . z
    num = c * zz + d if term_order == "corrected" else c * d + zz
    out = np.clip(num / np.sqrt((c * c * zz + 2.0 * c * d + zz) * zz), -1.0, 1.0)
    out.sort()
    return EmpiricalCDF(out)


@dataclass(frozen=True)
class SignificanceVerdict:
    r1: float
    r2: float
    cdf_at_r2: float
    significant: bool
    shuffles: int
    seed: int
    n: int = 0

    def to_json(self):
        return asdict(self)


def significance_test(x, r1, r2, n_shuffles=10000, seed=0, term_order="corrected"):
    """Is ``r2`` an unlikely sample correlation if the true one is ``r1``?

    Significant when ``P(rho < r2 | r1) < 0.05`` or ``> 0.95``.
    """
    cdf = bootstrap_correlation_cdf(x, r1, n_shuffles, seed, term_order)
    at = cdf(r2)
    return SignificanceVerdict(
        r1=float(r1), r2=float(r2), cdf_at_r2=at,
        significant=bool(at < ALPHA or at > 1.0 - ALPHA),
        shuffles=n_shuffles, seed=seed, n=int(np.size(getattr(x, "values", x))),
    )


def significance_threshold(x, r, n_shuffles=10000, seed=0):
    """Half-widths ``(r - q05, q95 - r)`` of the non-significant band around ``r``."""
    cdf = bootstrap_correlation_cdf(x, r, n_shuffles, seed)
    return r - cdf.quantile(ALPHA), cdf.quantile(1.0 - ALPHA) - r
