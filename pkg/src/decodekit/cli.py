"""Command-line entry point: ``decodekit {score,tree,stats,convert-dataset,record-fixtures,make-synthetic}``."""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

from .exceptions import DecodeKitError
from .harness import (
    RunConfig,
    prompt_specs,
    build_source,
    convert_summeval,
    emit_report,
    ingest_dataset,
    run_scoring,
    run_tree,
    write_dataset,
    write_results,
)
from .scoring import example_seed, render_prompt
from .stats import pearson, significance_test

logger = logging.getLogger("decodekit")

EXTENSIONS = {"text": "txt", "json": "json", "csv": "csv"}


def _csv_list(value):
    return [v.strip() for v in value.split(",") if v.strip()]


def _float(value):
    return float(value)  # accepts "-inf"


def _add_run_options(p):
    g = p.add_argument_group("run configuration (overrides --config)")
    g.add_argument("--config", help="JSON config file")
    g.add_argument("--source", choices=["toy", "replay", "remote"])
    g.add_argument("--fixtures", help="fixture JSONL file to replay from")
    g.add_argument("--record", help="fixture JSONL file to record remote answers into")
    g.add_argument("--toy-lm", dest="toy_lm", help="toy LM table (JSON)")
    g.add_argument("--endpoint-url", help="OpenAI-compatible completions URL")
    g.add_argument("--model")
    g.add_argument("--k", type=int, help="number of top log-probabilities to request")
    g.add_argument("--timeout", type=float)
    g.add_argument("--retries", type=int)
    g.add_argument("--max-in-flight", type=int)
    g.add_argument("--api-key-env", help="environment variable holding the API key")
    g.add_argument("--temperature", type=float, help="temperature for E(s) scoring (default 10)")
    g.add_argument("--orderings", type=_csv_list, help="comma list of ascending,reversed,random")
    g.add_argument("--seed", type=int)
    g.add_argument("--metrics", type=_csv_list)
    g.add_argument("--template", help="prompt template file")
    g.add_argument("--choices", help="choice texts JSON file")
    g.add_argument("--output-dir", dest="output_dir")
    g.add_argument("--workers", type=int)
    g.add_argument("--shuffles", type=int)
    g.add_argument("--formats", type=_csv_list, help="comma list of text,json,csv")


def _add_tree_options(p):
    g = p.add_argument_group("tree sampler")
    g.add_argument("--top-p", type=float)
    g.add_argument("--tree-temperature", type=float)
    g.add_argument("--alpha", type=_float, help="minimum cumulative log-probability")
    g.add_argument("--stop", action="append", help="stop token (repeatable)")
    g.add_argument("--max-steps", type=int)
    g.add_argument("--max-length", type=int)
    g.add_argument("--renormalize", action="store_true", default=None)
    g.add_argument("--min-probability", type=float)


RUN_FIELDS = ("source", "fixtures", "record", "toy_lm", "temperature", "orderings", "seed",
              "metrics", "template", "choices", "output_dir", "workers", "shuffles", "formats")
ENDPOINT_FIELDS = {"endpoint_url": "url", "model": "model", "k": "k", "timeout": "timeout",
                   "retries": "retries", "max_in_flight": "max_in_flight", "api_key_env": "api_key_env"}
TREE_FIELDS = {"top_p": "top_p", "tree_temperature": "temperature", "alpha": "alpha", "stop": "stop_tokens",
               "max_steps": "max_steps", "max_length": "max_length", "renormalize": "renormalize",
               "min_probability": "min_probability"}


def load_config(args):
    data = {}
    if getattr(args, "config", None):
        with open(args.config, encoding="utf-8") as fh:
            data = json.load(fh)
    for name in RUN_FIELDS:
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    endpoint = dict(data.get("endpoint", {}))
    for arg, key in ENDPOINT_FIELDS.items():
        value = getattr(args, arg, None)
        if value is not None:
            endpoint[key] = value
    data["endpoint"] = endpoint
    tree = dict(data.get("tree", {}))
    for arg, key in TREE_FIELDS.items():
        value = getattr(args, arg, None)
        if value is not None:
            tree[key] = value
    data["tree"] = tree
    return RunConfig.from_dict(data)


def cmd_score(args):
    config = load_config(args)
    dataset = ingest_dataset(args.dataset)
    results, report = run_scoring(config, dataset)
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_results(results, out / "results.jsonl")
    for fmt in config.formats:
        emit_report(report, fmt, out / f"report.{EXTENSIONS[fmt]}")
    if "text" in config.formats:
        sys.stdout.write((out / "report.txt").read_text(encoding="utf-8"))
    m = report.meta
    logger.info("scored %d of %d examples (%d failed)", m["n_scored"], m["n_in"], m["n_failed"])
    return 0


def cmd_tree(args):
    config = load_config(args)
    result, table = run_tree(config, args.prompt)
    sys.stdout.write(table)
    if args.json_out:
        Path(args.json_out).write_text(json.dumps(result.to_json(), indent=2) + "\n", encoding="utf-8")
    return 0


def cmd_stats(args):
    """Compare two score columns of a CSV against a human column."""
    with open(args.input, newline="", encoding="utf-8") as fh:
        records = list(csv.DictReader(fh))
    groups = {}
    for rec in records:
        groups.setdefault(rec[args.group] if args.group else args.human, []).append(rec)
    rows = []
    for metric in sorted(groups):
        recs = groups[metric]
        x = [float(r[args.human]) for r in recs]
        r_base = pearson(x, [float(r[args.baseline]) for r in recs])
        r_meth = pearson(x, [float(r[args.method]) for r in recs])
        verdict = significance_test(x, r_base, r_meth, args.shuffles, args.seed)
        rows.append({
            "metric": metric, "r_baseline": r_base, "r_method": r_meth, "cdf": verdict.cdf_at_r2,
            "significant": verdict.significant, "n": len(x), "shuffles": args.shuffles, "seed": args.seed,
        })
    text = "".join(json.dumps(r, sort_keys=True) + "\n" for r in rows)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return 0


def cmd_convert(args):
    examples = convert_summeval(args.src, args.dst, args.data_root)
    logger.info("wrote %d examples to %s", len(examples), args.dst)
    return 0


def cmd_record(args):
    config = load_config(args)
    if config.source != "remote":
        raise DecodeKitError("record-fixtures needs --source remote")
    config.validate("score")
    dataset = ingest_dataset(args.dataset)
    source = build_source(config)
    specs = prompt_specs(config)
    failed = 0
    for ex in dataset:
        seed = example_seed(config.seed, ex.id)
        for metric in config.metrics:
            for ordering in config.orderings:
                try:
                    source.next_token_logits([render_prompt(specs[metric], ex, ordering, seed, metric)])
                except DecodeKitError as exc:
                    failed += 1
                    logger.warning("%s/%s/%s failed: %s", ex.id, metric, ordering, exc)
    logger.info("recorded %d fixtures into %s (%d failures)", len(source.store), source.store.path, failed)
    return 1 if failed else 0


def cmd_synthetic(args):
    from .synthetic import build_fixtures, make_dataset

    config = load_config(args)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dataset = make_dataset(args.n, args.data_seed)
    write_dataset(dataset, out / "dataset.jsonl")
    store = build_fixtures(dataset, prompt_specs(config), config.orderings, config.seed, tau=args.tau,
                           noise_sd=args.noise, position_bias=args.position_bias)
    store.save(out / "fixtures.jsonl")
    logger.info("wrote %d examples and %d fixtures to %s", len(dataset), len(store), out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="decodekit", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="score a dataset and correlate with human ratings")
    p.add_argument("--dataset", required=True)
    _add_run_options(p)
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("tree", help="enumerate probable completions of a prompt")
    p.add_argument("--prompt", required=True)
    p.add_argument("--json-out", help="also write the full result as JSON")
    _add_run_options(p)
    _add_tree_options(p)
    p.set_defaults(func=cmd_tree)

    p = sub.add_parser("stats", help="bootstrap significance of a correlation difference")
    p.add_argument("--input", required=True, help="CSV with one row per example")
    p.add_argument("--human", required=True, help="column with human ratings")
    p.add_argument("--baseline", required=True, help="column with baseline scores")
    p.add_argument("--method", required=True, help="column with the compared scores")
    p.add_argument("--group", help="column to split rows by (e.g. metric)")
    p.add_argument("--shuffles", type=int, default=10000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write JSON-lines rows here")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("convert-dataset", help="convert SummEval annotations to the dataset format")
    p.add_argument("src")
    p.add_argument("dst")
    p.add_argument("--data-root", help="directory that SummEval 'filepath' entries are relative to")
    p.set_defaults(func=cmd_convert)

    p = sub.add_parser("record-fixtures", help="fetch and record remote answers for every prompt")
    p.add_argument("--dataset", required=True)
    _add_run_options(p)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("make-synthetic", help="write a synthetic dataset with matching fixtures")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--data-seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--position-bias", type=float, default=0.0)
    _add_run_options(p)
    p.set_defaults(func=cmd_synthetic)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DecodeKitError as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
