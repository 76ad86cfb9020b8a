"""Multiple-choice Likert scoring: prompt rendering, label probabilities,
greedy and expected-value scores, and positional-bias averaging.

Labels are always printed in fixed order (A, B, C, D, E). What changes with the
ordering is which choice text each label carries, and therefore which Likert
score each label stands for.
"""

import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .distributions import TokenDistribution, renormalize_over
from .exceptions import InvalidInputError, ScoringError, TemplateError
from .validation import check_temperature

DEFAULT_LABELS = ("A", "B", "C", "D", "E")
DEFAULT_TEMPERATURE = 10.0
PLACEHOLDERS = ("{article}", "{summary}", "{metric}", "{choices}")
ORDERINGS = ("ascending", "reversed", "random")


def default_variants(labels=DEFAULT_LABELS):
    """Token spellings counted as each label: bare and with a leading space."""
    return {label: (label, " " + label) for label in labels}


@dataclass(frozen=True)
class McqPromptSpec:
    template: str
    choice_texts: tuple
    labels: tuple = DEFAULT_LABELS

    def __post_init__(self):
        object.__setattr__(self, "choice_texts", tuple(self.choice_texts))
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(self.labels) != 5 or len(self.choice_texts) != 5:
            raise InvalidInputError("an MCQ prompt needs exactly 5 labels and 5 choice texts")
        missing = [p for p in PLACEHOLDERS if p not in self.template]
        if missing:
            raise TemplateError(f"template is missing placeholder(s): {', '.join(missing)}")


def load_default_spec(metric=None):
    """The bundled template and the choice texts for ``metric``."""
    pkg = resources.files("decodekit") / "templates"
    template = (pkg / "mcq_likert.txt").read_text(encoding="utf-8")
    choices = json.loads((pkg / "choices.json").read_text(encoding="utf-8"))
    return McqPromptSpec(template, choices.get(metric, choices["default"]))


def load_spec(template_path, choices_path=None, metric=None):
    with open(template_path, encoding="utf-8") as fh:
        template = fh.read()
    if choices_path is None:
        pkg = resources.files("decodekit") / "templates"
        choices = json.loads((pkg / "choices.json").read_text(encoding="utf-8"))
    else:
        with open(choices_path, encoding="utf-8") as fh:
            choices = json.load(fh)
    return McqPromptSpec(template, choices.get(metric, choices["default"]))


def example_seed(run_seed, example_id):
    digest = hashlib.sha256(f"{run_seed}:{example_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")


def choice_order(ordering, seed=None):
    """Index (0 = worst) of the choice text shown after each label.

    ``seed`` is only used by the random ordering.
    """
    if ordering == "ascending":
        return (0, 1, 2, 3, 4)
    if ordering == "reversed":
        return (4, 3, 2, 1, 0)
    if ordering == "random":
        if seed is None:
            raise InvalidInputError("random ordering needs a seed")
        return tuple(int(i) for i in np.random.default_rng(seed).permutation(5))
    raise InvalidInputError(f"unknown ordering {ordering!r}; expected one of {ORDERINGS}")


def score_map(ordering, seed=None, labels=DEFAULT_LABELS):
    """Likert score for each label under ``ordering`` (the mapping F)."""
    return {label: idx + 1 for label, idx in zip(labels, choice_order(ordering, seed))}


def render_prompt(spec, example, ordering="ascending", seed=None, metric=""):
    order = choice_order(ordering, seed)
    lines = [f"{label}. {spec.choice_texts[idx]}" for label, idx in zip(spec.labels, order)]
    try:
        article, summary = example["article"], example["summary"]
    except (KeyError, TypeError):
        article = getattr(example, "article", None)
        summary = getattr(example, "summary", None)
    if article is None or summary is None:
        raise InvalidInputError("example needs article and summary text")
    # single pass so substituted text is never re-scanned for placeholders
    values = {"{article}": article, "{summary}": summary, "{metric}": metric,
              "{choices}": "\n".join(lines)}
    out, pos, tmpl = [], 0, spec.template
    while True:
        nxt = [(tmpl.find(p, pos), p) for p in PLACEHOLDERS if tmpl.find(p, pos) >= 0]
        if not nxt:
            out.append(tmpl[pos:])
            break
        at, p = min(nxt)
        out.append(tmpl[pos:at])
        out.append(values[p])
        pos = at + len(p)
    return "".join(out)


def extract_label_probs(dist, labels=DEFAULT_LABELS, variants=None, T=DEFAULT_TEMPERATURE):
    """Probabilities of ``labels`` renormalized among themselves at temperature ``T``.

    A label's raw log-probability is the log-sum over its matched token
    variants; labels with no matching token get probability zero.
    """
    T = check_temperature(T)
    if not isinstance(dist, TokenDistribution):
        dist = TokenDistribution.from_logprobs(
            zip(dist.tokens, dist.logits) if hasattr(dist, "logits") else dist
        )
    variants = variants or default_variants(labels)
    raw = dist.as_dict()
    pairs = []
    for label in labels:
        found = [raw[v] for v in variants.get(label, (label,)) if v in raw]
        if found:
            pairs.append((label, float(np.logaddexp.reduce(found))))
    if not pairs:
        raise ScoringError(
            f"none of the labels {list(labels)} appear among the candidates", top_tokens=dist.top(10)
        )
    label_dist = TokenDistribution.from_logprobs(pairs)
    logprobs = renormalize_over(label_dist, labels, T).as_dict()
    return np.exp([logprobs.get(label, -np.inf) for label in labels])


def _check_probs(probs, n):
    probs = np.asarray(probs, dtype=np.float64)
    if probs.shape != (n,):
        raise InvalidInputError(f"expected {n} label probabilities, got shape {probs.shape}")
    if abs(probs.sum() - 1.0) > 1e-9:
        raise InvalidInputError(f"label probabilities sum to {probs.sum()}, not 1")
    return probs


def _scores(smap, labels):
    return np.array([smap[label] for label in labels], dtype=np.float64)


def expected_score(label_probs, smap, labels=DEFAULT_LABELS):
    """Probability-weighted mean of the Likert scores."""
    probs = _check_probs(label_probs, len(labels))
    return float(np.dot(probs, _scores(smap, labels)))


def greedy_score(label_probs, smap, labels=DEFAULT_LABELS):
    """Score of the most probable label; exact ties go to the lower score."""
    probs = _check_probs(label_probs, len(labels))
    scores = _scores(smap, labels)
    best = probs.max()
    return int(scores[probs == best].min())


@dataclass
class LikertResult:
    example_id: str
    ordering: str
    label_probs: dict
    greedy: int
    expected: float
    temperature: float
    metric: str = ""
    score_map: dict = field(default_factory=dict)

    def to_json(self):
        return {
            "id": self.example_id,
            "metric": self.metric,
            "ordering": self.ordering,
            "labels": self.label_probs,
            "greedy": self.greedy,
            "expected": self.expected,
            "T": self.temperature,
        }


def score_distribution(dist, example_id, ordering, seed=None, T=DEFAULT_TEMPERATURE,
                       labels=DEFAULT_LABELS, variants=None, metric=""):
    """Greedy and expected-value scores for one rendered prompt's distribution."""
    smap = score_map(ordering, seed, labels)
    probs = extract_label_probs(dist, labels, variants, T)
    return LikertResult(
        example_id=example_id,
        ordering=ordering,
        label_probs={label: float(p) for label, p in zip(labels, probs)},
        greedy=greedy_score(probs, smap, labels),
        expected=expected_score(probs, smap, labels),
        temperature=T,
        metric=metric,
        score_map=smap,
    )


def positional_average(results):
    """Mean greedy and mean expected score over orderings of one example.

    Returns ``(greedy_mean, expected_mean)``.
    """
    results = list(results)
    if len(results) < 2:
        raise InvalidInputError("positional averaging needs at least two orderings")
    ids = {r.example_id for r in results}
    if len(ids) != 1:
        raise InvalidInputError(f"results belong to different examples: {sorted(ids)}")
    orderings = [r.ordering for r in results]
    if len(set(orderings)) != len(orderings):
        raise InvalidInputError(f"orderings must be distinct, got {orderings}")
    greedy = sum(r.greedy for r in results) / len(results)
    expected = sum(r.expected for r in results) / len(results)
    return float(greedy), float(expected)
