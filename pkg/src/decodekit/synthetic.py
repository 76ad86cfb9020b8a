"""Synthetic annotated datasets and matching fixture stores.

Each example gets a latent quality per metric, drawn uniformly from [1, 5] and
used directly as the human rating. The simulated judge gives the label that
carries score ``k`` the logit ``-|k - quality| / tau + noise_k``, where the
noise is drawn once per (example, metric, score). Because noise follows the
score rather than the label, the judge is order-symmetric: every ordering
sees the same score probabilities. ``position_bias`` adds a constant to label
"A" whatever it stands for, which breaks that symmetry.
"""

import numpy as np

from .harness import METRICS, AnnotatedExample
from .scoring import DEFAULT_LABELS, example_seed, render_prompt, score_map
from .sources import FixtureStore

FILLER_TOKENS = ("The", " The", "\n", " Based", "I", " I")
FILLER_LOGIT = -4.0


def make_dataset(n, seed=0):
    rng = np.random.default_rng(seed)
    out = []
    for i in range(n):
        human = {m: float(v) for m, v in zip(METRICS, rng.uniform(1.0, 5.0, len(METRICS)))}
        out.append(AnnotatedExample(
            id=f"ex{i:04d}",
            article=f"Article {i}: a short synthetic news story used for scoring tests.",
            summary=f"Summary {i} of the synthetic story.",
            human=human,
        ))
    return out


def judge_logits(quality, noise, smap, tau, position_bias=0.0, labels=DEFAULT_LABELS):
    logits = {}
    for j, label in enumerate(labels):
        k = smap[label]
        logits[label] = -abs(k - quality) / tau + noise[k - 1] + (position_bias if j == 0 else 0.0)
    return logits


def build_fixtures(dataset, specs, orderings, run_seed=0, tau=0.5, noise_sd=2.0,
                   position_bias=0.0, noise_seed=0, store=None):
    """Record the simulated judge's top candidates for every rendered prompt.

    ``specs`` maps metric name to :class:`McqPromptSpec`; prompts are rendered
    exactly as the scoring pipeline renders them.
    """
    store = store if store is not None else FixtureStore()
    for ex in dataset:
        seed = example_seed(run_seed, ex.id)
        for metric, spec in specs.items():
            rng = np.random.default_rng(example_seed(f"{noise_seed}:{metric}", ex.id))
            noise = noise_sd * rng.standard_normal(5)
            for ordering in orderings:
                smap = score_map(ordering, seed)
                logits = judge_logits(ex.human[metric], noise, smap, tau, position_bias)
                pairs = list(logits.items()) + [(t, FILLER_LOGIT - 0.5 * i)
                                                for i, t in enumerate(FILLER_TOKENS)]
                values = np.array([v for _, v in pairs])
                lse = np.logaddexp.reduce(values)
                candidates = sorted(((t, float(v - lse)) for t, v in pairs), key=lambda p: (-p[1], p[0]))
                store.record(render_prompt(spec, ex, ordering, seed, metric), candidates)
    return store
