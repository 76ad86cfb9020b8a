"""Decoding analysis for language models.

Expected-value scoring of multiple-choice Likert prompts under temperature
scaling, positional-bias averaging, bootstrap tests for correlation
differences, and best-first enumeration of top-p completions.
"""

from .distributions import (
    LogitVector,
    TokenDistribution,
    renormalize_over,
    softmax_with_temperature,
    top_p_candidates,
)
from .estimators import LikertScorer
from .scoring import (
    McqPromptSpec,
    LikertResult,
    expected_score,
    extract_label_probs,
    greedy_score,
    positional_average,
    render_prompt,
    score_map,
)
from .sources import FixtureStore, RemoteSource, ReplaySource, ToyLM, record_fixture
from .stats import bootstrap_correlation_cdf, pearson, significance_test
from .tree import TreeConfig, pop_order_trace, report_tree, tree_sample

__version__ = "0.1.0"

__all__ = [
    "LogitVector", "TokenDistribution", "softmax_with_temperature", "top_p_candidates",
    "renormalize_over", "LikertScorer", "McqPromptSpec", "LikertResult", "render_prompt",
    "extract_label_probs", "expected_score", "greedy_score", "positional_average", "score_map",
    "ToyLM", "FixtureStore", "ReplaySource", "RemoteSource", "record_fixture", "pearson",
    "bootstrap_correlation_cdf", "significance_test", "TreeConfig", "tree_sample",
    "pop_order_trace", "report_tree",
]
