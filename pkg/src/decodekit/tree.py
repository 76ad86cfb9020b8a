"""Best-first enumeration of the probable completions of a prompt.

The search keeps a max-priority queue of partial completions keyed by
cumulative log-probability. Each step pops the most probable prefix, asks the
source for its next-token distribution at temperature ``T``, keeps the top-p
nucleus, and sorts every child into one of three bins:

* ends in a stop token -> complete
* cumulative log-probability below ``alpha`` -> incomplete (``incomplete-alpha``)
* otherwise -> back on the queue, or incomplete (``incomplete-budget``) once it
  reaches ``max_length`` extension tokens

The loop stops when the queue empties or after ``max_steps`` source calls;
anything still queued is returned as the frontier.
"""

import heapq
import itertools
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .distributions import TokenDistribution, softmax_with_temperature, top_p_candidates
from .exceptions import InvalidInputError, LogitSourceError, TreeSampleError
from .validation import check_temperature, check_top_p

COMPLETE = "complete"
INCOMPLETE_ALPHA = "incomplete-alpha"
INCOMPLETE_BUDGET = "incomplete-budget"


@dataclass(frozen=True)
class TreeConfig:
    top_p: float = 0.9
    temperature: float = 2.0
    alpha: float = -math.inf
    stop_tokens: frozenset = frozenset()
    max_steps: int = 1000
    max_length: int = 64
    renormalize: bool = False

    def __post_init__(self):
        check_top_p(self.top_p)
        check_temperature(self.temperature)
        object.__setattr__(self, "alpha", float(self.alpha))
        object.__setattr__(self, "stop_tokens", frozenset(self.stop_tokens))
        if math.isnan(self.alpha) or self.alpha > 0:
            raise InvalidInputError("alpha is a log-likelihood floor and must be <= 0")
        if int(self.max_steps) < 1 or int(self.max_length) < 1:
            raise InvalidInputError("max_steps and max_length must be positive")

    def to_json(self):
        d = asdict(self)
        d["stop_tokens"] = sorted(self.stop_tokens)
        d["alpha"] = None if self.alpha == -math.inf else self.alpha
        return d


@dataclass(frozen=True)
class ScoredSequence:
    """Extension tokens after the prompt, their summed log-probability and fate."""

    tokens: tuple
    logprob: float
    status: str

    @property
    def probability(self):
        return math.exp(self.logprob)

    def text(self, stop_tokens=frozenset()):
        toks = self.tokens
        if self.status == COMPLETE and toks and toks[-1] in stop_tokens:
            toks = toks[:-1]
        return "".join(toks)


@dataclass
class TreeSampleResult:
    complete: list = field(default_factory=list)
    incomplete: list = field(default_factory=list)
    frontier: list = field(default_factory=list)
    steps_used: int = 0
    mass: dict = field(default_factory=dict)
    pop_trace: list = field(default_factory=list)
    config: TreeConfig = None

    def to_json(self):
        stops = self.config.stop_tokens if self.config else frozenset()

        def seqs(items):
            return [
                {"tokens": list(s.tokens), "text": s.text(stops), "logprob": s.logprob, "status": s.status}
                for s in items
            ]

        return {
            "config": self.config.to_json() if self.config else None,
            "complete": seqs(self.complete),
            "incomplete": seqs(self.incomplete),
            "frontier": seqs(self.frontier),
            "mass": dict(self.mass),
            "steps_used": self.steps_used,
        }


def _children(source, prefix, config):
    logits = source.next_token_logits(prefix)
    dist = softmax_with_temperature(logits, config.temperature)
    nucleus = top_p_candidates(dist, config.top_p)
    if config.renormalize and len(nucleus) < len(dist):
        lps = np.asarray(nucleus.logprobs)
        lps = lps - np.logaddexp.reduce(lps)
        nucleus = TokenDistribution(nucleus.tokens, tuple(lps.tolist()), nucleus.temperature, True)
    return nucleus


def tree_sample(source, prompt_tokens, config, on_complete=None):
    """Enumerate completions of ``prompt_tokens`` in best-first order.

    Stop-terminated children wait on the queue like any other entry and are
    confirmed complete when popped; that costs no source call and no step, so
    ``on_complete`` (if given) sees completions in non-increasing probability.
    Complete and incomplete lists are sorted by log-probability descending.
    If the source fails the run stops and :class:`TreeSampleError` carries the
    partial result.
    """
    prompt = tuple(prompt_tokens)
    if not prompt:
        raise InvalidInputError("prompt must contain at least one token")

    counter = itertools.count()
    # heapq is a min-heap: negate the priority, the counter keeps FIFO order on ties
    queue = [(-0.0, next(counter), (), False)]
    result = TreeSampleResult(config=config)
    dropped = 0.0

    def confirm(ext, logprob):
        seq = ScoredSequence(ext, logprob, COMPLETE)
        result.complete.append(seq)
        if on_complete is not None:
            on_complete(seq)

    def finish():
        frontier = []
        for neg, _, ext, terminal in sorted(queue):
            if terminal:
                confirm(ext, -neg)
            else:
                frontier.append(ScoredSequence(ext, -neg, INCOMPLETE_BUDGET))
        queue.clear()
        result.frontier = frontier
        result.complete.sort(key=lambda s: -s.logprob)
        result.incomplete.sort(key=lambda s: -s.logprob)
        result.mass = {
            "complete": math.fsum(s.probability for s in result.complete),
            "incomplete": math.fsum(s.probability for s in result.incomplete),
            "frontier": math.fsum(s.probability for s in result.frontier),
            "dropped": dropped,
        }
        return result

    while queue:
        if queue[0][3]:
            neg, _, ext, _ = heapq.heappop(queue)
            confirm(ext, -neg)
            continue
        if result.steps_used >= config.max_steps:
            break
        neg, order, ext, _ = heapq.heappop(queue)
        cum = -neg
        try:
            nucleus = _children(source, prompt + ext, config)
        except LogitSourceError as exc:
            heapq.heappush(queue, (neg, order, ext, False))
            raise TreeSampleError(f"logit source failed after {result.steps_used} steps: {exc}",
                                  finish()) from exc
        result.steps_used += 1
        result.pop_trace.append(cum)

        kept = []
        for token, lp in nucleus:
            child = ext + (token,)
            child_lp = cum + lp
            kept.append(child_lp)
            if token in config.stop_tokens:
                heapq.heappush(queue, (-child_lp, next(counter), child, True))
            elif child_lp < config.alpha:
                result.incomplete.append(ScoredSequence(child, child_lp, INCOMPLETE_ALPHA))
            elif len(child) >= config.max_length:
                result.incomplete.append(ScoredSequence(child, child_lp, INCOMPLETE_BUDGET))
            else:
                heapq.heappush(queue, (-child_lp, next(counter), child, False))
        if not config.renormalize:
            dropped += max(0.0, math.exp(cum) - math.fsum(math.exp(v) for v in kept))

    return finish()


def pop_order_trace(result):
    """Cumulative log-probabilities of the expanded prefixes, in pop order."""
    return list(result.pop_trace)


def report_tree(result, min_probability=0.001, include_incomplete=False):
    """Text table of completions at or above ``min_probability``, most probable first."""
    stops = result.config.stop_tokens if result.config else frozenset()
    rows = list(result.complete)
    if include_incomplete:
        rows += result.incomplete
    rows = [s for s in rows if s.probability >= min_probability]
    rows.sort(key=lambda s: -s.logprob)
    lines = ["Probability  LLM output"]
    for s in rows:
        text = s.text(stops).replace("\n", "\\n")
        lines.append(f"{s.probability:<11.3g}  {text}")
    if not result.complete and (result.frontier or result.incomplete):
        lines.append(
            f"(no complete sequence within budget: {result.steps_used} steps used, "
            f"frontier mass {result.mass.get('frontier', 0.0):.3g}, "
            f"incomplete mass {result.mass.get('incomplete', 0.0):.3g})"
        )
    return "\n".join(lines) + "\n"
