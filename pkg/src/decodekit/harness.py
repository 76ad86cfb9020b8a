"""Dataset ingestion, experiment orchestration and report output."""

import csv
import io
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .distributions import TokenDistribution
from .exceptions import (
    ConfigError,
    DatasetError,
    DecodeKitError,
    DegenerateSeriesError,
    RunAbortedError,
)
from .scoring import (
    DEFAULT_TEMPERATURE,
    ORDERINGS,
    example_seed,
    load_default_spec,
    load_spec,
    positional_average,
    render_prompt,
    score_distribution,
)
from .sources import EndpointConfig, FixtureStore, RecordingSource, RemoteSource, ReplaySource, ToyLM
from .stats import pearson, significance_test
from .tree import TreeConfig, report_tree, tree_sample

logger = logging.getLogger(__name__)

METRICS = ("relevance", "fluency", "coherence", "consistency")
MAX_FAILURE_RATE = 0.10
REPORT_DIGITS = 6


@dataclass(frozen=True)
class AnnotatedExample:
    id: str
    article: str
    summary: str
    human: dict


def ingest_dataset(path):
    """Read and validate a JSON-lines dataset of annotated summaries."""
    examples, seen = [], set()
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc.strerror}") from exc
    with fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON ({exc.msg})", line=lineno)
            examples.append(_parse_example(rec, lineno))
            if examples[-1].id in seen:
                raise DatasetError(f"duplicate id {examples[-1].id!r}", line=lineno)
            seen.add(examples[-1].id)
    return examples


def _parse_example(rec, lineno):
    if not isinstance(rec, dict):
        raise DatasetError("record must be a JSON object", line=lineno)
    for key in ("id", "article", "summary", "human"):
        if key not in rec:
            raise DatasetError(f"missing field {key!r}", line=lineno)
    if not isinstance(rec["article"], str) or not isinstance(rec["summary"], str):
        raise DatasetError("article and summary must be strings", line=lineno)
    human = rec["human"]
    if not isinstance(human, dict):
        raise DatasetError("human must be an object of metric scores", line=lineno)
    clean = {}
    for metric in METRICS:
        if metric not in human:
            raise DatasetError(f"human score for {metric!r} is missing", line=lineno)
        value = human[metric]
        if isinstance(value, bool) or not isinstance(value, (int, float)) or not 1 <= value <= 5:
            raise DatasetError(f"human {metric} score {value!r} outside [1, 5]", line=lineno)
        clean[metric] = float(value)
    return AnnotatedExample(str(rec["id"]), rec["article"], rec["summary"], clean)


def write_dataset(examples, path):
    with open(path, "w", encoding="utf-8") as fh:
        for ex in examples:
            fh.write(json.dumps(asdict(ex), ensure_ascii=False) + "\n")


def convert_summeval(src, dst, data_root=None):
    """Convert the public SummEval annotation file to the dataset format.

    Each line of ``src`` carries ``id``, ``model_id``, ``decoded`` and a list of
    ``expert_annotations``; the article is ``text`` or, failing that, read from
    ``filepath`` under ``data_root``. Human scores are the expert means.
    """
    out = []
    with open(src, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                experts = rec["expert_annotations"]
                summary = rec["decoded"]
                ex_id = f"{rec['id']}:{rec.get('model_id', '')}".rstrip(":")
            except (json.JSONDecodeError, KeyError) as exc:
                raise DatasetError(f"not a SummEval annotation record ({exc})", line=lineno)
            article = rec.get("text")
            if article is None:
                if data_root is None or "filepath" not in rec:
                    raise DatasetError("article text missing; pass data_root", line=lineno)
                article = (Path(data_root) / rec["filepath"]).read_text(encoding="utf-8")
            human = {m: sum(a[m] for a in experts) / len(experts) for m in METRICS}
            out.append(AnnotatedExample(ex_id, article, summary, human))
    write_dataset(out, dst)
    return out


@dataclass
class RunConfig:
    source: str = "replay"
    fixtures: str = None
    record: str = None
    toy_lm: str = None
    endpoint: dict = field(default_factory=dict)
    temperature: float = DEFAULT_TEMPERATURE
    orderings: list = field(default_factory=lambda: ["ascending"])
    seed: int = 0
    metrics: list = field(default_factory=lambda: list(METRICS))
    template: str = None
    choices: str = None
    output_dir: str = "runs"
    workers: int = 1
    shuffles: int = 10000
    formats: list = field(default_factory=lambda: ["text", "json"])
    tree: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path, **overrides):
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        return cls.from_dict({**data, **{k: v for k, v in overrides.items() if v is not None}})

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        return cls(**data)

    def validate(self, mode="score"):
        if self.source not in ("toy", "replay", "remote"):
            raise ConfigError(f"source must be toy, replay or remote, got {self.source!r}")
        if mode == "score" and self.source == "toy":
            raise ConfigError("the toy LM has no prompt-level interface; score with replay or remote")
        if self.source == "replay" and not self.fixtures:
            raise ConfigError("replay source needs a fixtures file")
        if self.source == "replay" and not Path(self.fixtures).exists():
            raise ConfigError(f"fixtures file {self.fixtures} does not exist")
        if self.source == "toy" and not self.toy_lm:
            raise ConfigError("toy source needs a toy_lm table")
        if self.source == "remote":
            if not self.endpoint.get("url"):
                raise ConfigError("remote source needs endpoint.url")
            try:
                EndpointConfig(**self.endpoint)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad endpoint config: {exc}")
        if not self.orderings or any(o not in ORDERINGS for o in self.orderings):
            raise ConfigError(f"orderings must be drawn from {ORDERINGS}")
        if len(set(self.orderings)) != len(self.orderings):
            raise ConfigError("orderings must not repeat")
        if not self.metrics or any(m not in METRICS for m in self.metrics):
            raise ConfigError(f"metrics must be drawn from {METRICS}")
        if not (isinstance(self.temperature, (int, float)) and self.temperature > 0):
            raise ConfigError("temperature must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        if self.shuffles < 1000:
            raise ConfigError("shuffles must be >= 1000")
        if any(f not in ("text", "json", "csv") for f in self.formats):
            raise ConfigError("formats must be drawn from text, json, csv")
        return self

    def tree_config(self):
        t = dict(self.tree)
        t.pop("min_probability", None)
        if "stop_tokens" in t:
            t["stop_tokens"] = frozenset(t["stop_tokens"])
        if t.get("alpha") is None:
            t.pop("alpha", None)
        try:
            return TreeConfig(**t)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad tree config: {exc}")


def build_source(config):
    if config.source == "toy":
        return ToyLM.from_json(config.toy_lm)
    if config.source == "replay":
        return ReplaySource(FixtureStore(config.fixtures, min_candidates=1))
    source = RemoteSource(EndpointConfig(**config.endpoint))
    record = config.record or str(Path(config.output_dir) / "fixtures.jsonl")
    return RecordingSource(source, FixtureStore(record))


@dataclass
class CorrelationReport:
    rows: list
    meta: dict

    def to_json(self):
        return {"meta": self.meta, "rows": self.rows}


REPORT_FIELDS = ("metric", "variant", "n", "r_greedy", "r_expected", "cdf", "significant")


def _round(v):
    return None if v is None else round(float(v), REPORT_DIGITS)


def _correlation(human, scores):
    try:
        return pearson(human, scores)
    except DegenerateSeriesError:
        return None


def _score_example(example, config, specs, source):
    results = []
    for metric in config.metrics:
        seed = example_seed(config.seed, example.id)
        for ordering in config.orderings:
            prompt = render_prompt(specs[metric], example, ordering, seed, metric)
            logits = source.next_token_logits([prompt])
            dist = TokenDistribution.from_logprobs(zip(logits.tokens, logits.logits))
            results.append(score_distribution(dist, example.id, ordering, seed,
                                              config.temperature, metric=metric))
    return results


def prompt_specs(config):
    if config.template:
        return {m: load_spec(config.template, config.choices, m) for m in config.metrics}
    return {m: load_default_spec(m) for m in config.metrics}


def run_scoring(config, dataset, source=None):
    """Score every example and correlate the scores with the human ratings.

    Returns ``(results, report)`` where ``results`` is the flat list of
    :class:`LikertResult` in dataset order.
    """
    config.validate("score")
    source = source or build_source(config)
    specs = prompt_specs(config)

    def attempt(example):
        try:
            return _score_example(example, config, specs, source)
        except DecodeKitError as exc:
            logger.warning("example %s failed: %s", example.id, exc)
            return None

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        outcomes = list(pool.map(attempt, dataset))

    scored = [(ex, res) for ex, res in zip(dataset, outcomes) if res is not None]
    n_failed = len(dataset) - len(scored)
    if dataset and n_failed / len(dataset) > MAX_FAILURE_RATE:
        raise RunAbortedError(f"{n_failed} of {len(dataset)} examples failed", n_failed, len(dataset))
    if n_failed:
        logger.warning("excluded %d of %d examples", n_failed, len(dataset))

    rows = []
    for metric in config.metrics:
        human = [ex.human[metric] for ex, _ in scored]
        per = {o: [] for o in config.orderings}
        avg = []
        for _, res in scored:
            mine = [r for r in res if r.metric == metric]
            for r in mine:
                per[r.ordering].append(r)
            if len(mine) >= 2:
                avg.append(positional_average(mine))
        streams = [(o, [r.greedy for r in per[o]], [r.expected for r in per[o]]) for o in config.orderings]
        if len(config.orderings) >= 2:
            streams.append(("average", [g for g, _ in avg], [e for _, e in avg]))
        for variant, greedy, expected in streams:
            rows.append(_report_row(metric, variant, human, greedy, expected, config))

    meta = {
        "n_in": len(dataset),
        "n_scored": len(scored),
        "n_failed": n_failed,
        "temperature": config.temperature,
        "orderings": list(config.orderings),
        "seed": config.seed,
        "shuffles": config.shuffles,
    }
    results = [r for _, res in scored for r in res]
    return results, CorrelationReport(rows, meta)


def _report_row(metric, variant, human, greedy, expected, config):
    n = len(human)
    r_g = _correlation(human, greedy) if n >= 3 else None
    r_e = _correlation(human, expected) if n >= 3 else None
    cdf = significant = None
    if r_g is not None and r_e is not None and abs(r_g) < 1:
        verdict = significance_test(human, r_g, r_e, config.shuffles, config.seed)
        cdf, significant = verdict.cdf_at_r2, verdict.significant
    return {
        "metric": metric,
        "variant": variant,
        "n": n,
        "r_greedy": _round(r_g),
        "r_expected": _round(r_e),
        "cdf": _round(cdf),
        "significant": significant,
    }


def write_results(results, path):
    with open(path, "w", encoding="utf-8") as fh:
        for r in results:
            fh.write(json.dumps(r.to_json(), sort_keys=True) + "\n")


def _fmt(value):
    if value is None:
        return "NaN"
    if isinstance(value, bool):
        return "yes" if value else "no"
    if isinstance(value, float):
        return f"{value:.3f}" if not math.isnan(value) else "NaN"
    return str(value)


def render_text(report):
    header = f"{'metric':<12} {'variant':<10} {'n':>5} {'greedy':>8} {'E(s)':>8} {'cdf':>8}  significant"
    lines = [header]
    for row in report.rows:
        sig = "-" if row["significant"] is None else _fmt(row["significant"])
        cdf = "-" if row["cdf"] is None else f"{row['cdf']:.4f}"
        lines.append(
            f"{row['metric']:<12} {row['variant']:<10} {row['n']:>5} "
            f"{_fmt(row['r_greedy']):>8} {_fmt(row['r_expected']):>8} {cdf:>8}  {sig}"
        )
    return "\n".join(lines) + "\n"


def render_csv(report):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_FIELDS)
    for row in report.rows:
        out = []
        for key in REPORT_FIELDS:
            v = row[key]
            if v is None:
                out.append("NaN" if key.startswith("r_") else "")
            elif isinstance(v, bool):
                out.append("true" if v else "false")
            else:
                out.append(repr(v) if isinstance(v, float) else v)
        writer.writerow(out)
    return buf.getvalue()


def render_json(report):
    return json.dumps(report.to_json(), indent=2, sort_keys=True) + "\n"


def emit_report(report, fmt, path):
    """Write ``report`` as ``text``, ``json`` or ``csv`` to ``path``."""
    renderers = {"text": render_text, "json": render_json, "csv": render_csv}
    if fmt not in renderers:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(renderers[fmt](report), encoding="utf-8")
    except OSError as exc:
        raise DecodeKitError(f"cannot write report to {path}: {exc}")
    return path


def load_report(path):
    """Read a JSON or CSV report back into a :class:`CorrelationReport`."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        data = json.loads(text)
        return CorrelationReport(data["rows"], data.get("meta", {}))
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        row = {"metric": rec["metric"], "variant": rec["variant"], "n": int(rec["n"])}
        for key in ("r_greedy", "r_expected", "cdf"):
            row[key] = None if rec[key] in ("", "NaN") else float(rec[key])
        row["significant"] = {"true": True, "false": False}.get(rec["significant"])
        rows.append(row)
    return CorrelationReport(rows, {})


def run_tree(config, prompt, source=None, min_probability=None):
    """Tree-sample ``prompt`` and render the completion table."""
    if not prompt:
        raise ConfigError("prompt must be non-empty")
    config.validate("tree")
    source = source or build_source(config)
    tree_cfg = config.tree_config()
    if isinstance(source, ToyLM) and not tree_cfg.stop_tokens:
        tree_cfg = replace(tree_cfg, stop_tokens=frozenset([source.stop]))
    if min_probability is None:
        min_probability = config.tree.get("min_probability", 0.001)
    tokens = source.encode(prompt) if isinstance(source, ToyLM) else [prompt]
    result = tree_sample(source, tokens, tree_cfg)
    return result, report_tree(result, min_probability)
