"""Temperature softmax, nucleus (top-p) truncation and restricted renormalization.

All values are immutable; token identifiers are opaque strings. Entries of a
:class:`TokenDistribution` are always ordered by log-probability descending,
ties broken by token id ascending, so every operation here is deterministic.
"""

from dataclasses import dataclass

import numpy as np

from .exceptions import EmptySupportError, InvalidInputError
from .validation import check_finite_logits, check_temperature, check_top_p

SUM_TOLERANCE = 1e-9


@dataclass(frozen=True)
class LogitVector:
    """Raw next-token scores for one position."""

    tokens: tuple
    logits: tuple

    def __post_init__(self):
        tokens = tuple(self.tokens)
        logits = tuple(float(v) for v in check_finite_logits(self.logits))
        if len(tokens) != len(logits):
            raise InvalidInputError("tokens and logits differ in length")
        if len(set(tokens)) != len(tokens):
            raise InvalidInputError("token ids must be unique within a logit vector")
        object.__setattr__(self, "tokens", tokens)
        object.__setattr__(self, "logits", logits)

    @classmethod
    def from_pairs(cls, pairs):
        pairs = list(pairs)
        return cls(tuple(t for t, _ in pairs), tuple(v for _, v in pairs))

    @classmethod
    def from_mapping(cls, mapping):
        return cls.from_pairs(mapping.items())

    def __len__(self):
        return len(self.tokens)

    def as_array(self):
        return np.asarray(self.logits, dtype=np.float64)


@dataclass(frozen=True)
class TokenDistribution:
    """Candidate tokens with log-probabilities at a given temperature.

    ``complete`` is True when the entries cover the whole support, i.e. the
    probabilities sum to one. Top-K lists from an API are incomplete.
    """

    tokens: tuple
    logprobs: tuple
    temperature: float = 1.0
    complete: bool = True

    def __post_init__(self):
        if len(self.tokens) != len(self.logprobs):
            raise InvalidInputError("tokens and logprobs differ in length")

    @classmethod
    def from_logprobs(cls, pairs, temperature=1.0, complete=False):
        """Build a distribution from already-normalized ``(token, logprob)`` pairs."""
        pairs = sorted(((str(t), float(lp)) for t, lp in pairs), key=_sort_key)
        return cls(
            tuple(t for t, _ in pairs),
            tuple(lp for _, lp in pairs),
            temperature=float(temperature),
            complete=complete,
        )

    def __len__(self):
        return len(self.tokens)

    def __iter__(self):
        return iter(zip(self.tokens, self.logprobs))

    def probs(self):
        return np.exp(np.asarray(self.logprobs, dtype=np.float64))

    def mass(self):
        return float(self.probs().sum())

    def as_dict(self):
        return dict(zip(self.tokens, self.logprobs))

    def top(self, k):
        return list(zip(self.tokens[:k], self.logprobs[:k]))


def _sort_key(pair):
    return (-pair[1], pair[0])


def _log_softmax(scaled):
    finite = np.isfinite(scaled)
    shift = scaled[finite].max()
    shifted = scaled - shift
    with np.errstate(under="ignore"):
        lse = np.log(np.exp(shifted[finite]).sum())
    return shifted - lse


def _sorted_distribution(tokens, logprobs, temperature, complete):
    order = sorted(range(len(tokens)), key=lambda i: (-logprobs[i], tokens[i]))
    return TokenDistribution(
        tuple(tokens[i] for i in order),
        tuple(float(logprobs[i]) for i in order),
        temperature=temperature,
        complete=complete,
    )


def softmax_with_temperature(logits, T=1.0):
    """Return ``exp(l_i / T) / sum_j exp(l_j / T)`` as a sorted distribution.

    The largest scaled logit is subtracted before exponentiating, so very small
    temperatures do not overflow.
    """
    T = check_temperature(T)
    if not isinstance(logits, LogitVector):
        logits = LogitVector.from_pairs(logits)
    logprobs = _log_softmax(logits.as_array() / T)
    return _sorted_distribution(logits.tokens, logprobs.tolist(), T, True)


def top_p_candidates(dist, top_p):
    """Smallest prefix of ``dist`` whose cumulative probability reaches ``top_p``.

    Log-probabilities are kept as they are (no renormalization); the result is
    marked incomplete unless it retains every entry.
    """
    top_p = check_top_p(top_p)
    n = len(dist)
    if top_p < 1.0:
        cumulative = np.cumsum(dist.probs())
        hit = np.flatnonzero(cumulative >= top_p)
        if hit.size:
            n = int(hit[0]) + 1
    return TokenDistribution(
        dist.tokens[:n],
        dist.logprobs[:n],
        temperature=dist.temperature,
        complete=dist.complete and n == len(dist),
    )


def renormalize_over(dist, support, T=1.0):
    """Softmax at temperature ``T`` over the entries of ``dist`` that are in ``support``.

    Support tokens absent from ``dist`` have probability zero and are left out
    of the result. At least one must be present.
    """
    T = check_temperature(T)
    support = set(support)
    if not support:
        raise EmptySupportError("support is empty")
    kept = [(t, lp) for t, lp in dist if t in support and lp > -np.inf]
    if not kept:
        raise EmptySupportError("none of the support tokens are present in the distribution")
    tokens = [t for t, _ in kept]
    logprobs = _log_softmax(np.array([lp for _, lp in kept], dtype=np.float64) / T)
    return _sorted_distribution(tokens, logprobs.tolist(), T, True)
