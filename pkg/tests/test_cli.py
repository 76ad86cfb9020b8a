import csv
import json
import shutil

import httpx
import numpy as np
import pytest

from decodekit.cli import main
from decodekit.sources import FixtureStore
from conftest import ROOT

GOLDEN = ROOT / "tests" / "golden"
DEMO = ROOT / "tests" / "data" / "demo20"


def score_demo(out_dir):
    return main(["score", "--config", str(DEMO / "config.json"), "--dataset", str(DEMO / "dataset.jsonl"),
                 "--fixtures", str(DEMO / "fixtures.jsonl"), "--output-dir", str(out_dir)])


def test_score_matches_golden(tmp_path, capsys):
    assert score_demo(tmp_path / "run") == 0
    for ext in ("txt", "json", "csv"):
        assert (tmp_path / "run" / f"report.{ext}").read_bytes() == (GOLDEN / f"demo20_report.{ext}").read_bytes()
    assert capsys.readouterr().out == (GOLDEN / "demo20_report.txt").read_text()
    lines = (tmp_path / "run" / "results.jsonl").read_text().splitlines()
    assert len(lines) == 20 * 4 * 3


def test_score_missing_dataset_is_an_error(tmp_path):
    assert main(["score", "--config", str(DEMO / "config.json"), "--dataset", str(tmp_path / "nope.jsonl"),
                 "--fixtures", str(DEMO / "fixtures.jsonl"), "--output-dir", str(tmp_path)]) == 2


def test_tree_matches_golden(capsys, monkeypatch):
    monkeypatch.chdir(ROOT)
    assert main(["tree", "--config", "configs/tree_demo.json", "--prompt", 'Answer: "']) == 0
    assert capsys.readouterr().out == (GOLDEN / "tree_demo.txt").read_text()


def test_tree_json_out_and_overrides(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(ROOT)
    out = tmp_path / "tree.json"
    assert main(["tree", "--config", "configs/tree_demo.json", "--prompt", 'Answer: "',
                 "--top-p", "1.0", "--alpha=-inf", "--json-out", str(out)]) == 0
    data = json.loads(out.read_text())
    assert data["config"]["top_p"] == 1.0 and data["config"]["alpha"] is None
    assert data["complete"]


def test_stats(tmp_path, capsys):
    rng = np.random.default_rng(0)
    human = rng.uniform(1, 5, 200)
    path = tmp_path / "s.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "human", "greedy", "expected"])
        for h in human:
            w.writerow(["relevance", h, round(h + rng.normal(0, 2)), h + rng.normal(0, 0.5)])
    out = tmp_path / "o.jsonl"
    assert main(["stats", "--input", str(path), "--human", "human", "--baseline", "greedy",
                 "--method", "expected", "--group", "metric", "--shuffles", "1000", "--out", str(out)]) == 0
    row = json.loads(out.read_text())
    assert row["metric"] == "relevance" and row["n"] == 200
    assert row["r_method"] > row["r_baseline"] and row["significant"] is True
    assert capsys.readouterr().out == out.read_text()


def test_convert_dataset(tmp_path):
    src = tmp_path / "s.jsonl"
    src.write_text(json.dumps({"id": "d1", "model_id": "M0", "decoded": "s", "text": "a",
                               "expert_annotations": [{"coherence": 1, "consistency": 2,
                                                       "fluency": 3, "relevance": 4}]}) + "\n")
    assert main(["convert-dataset", str(src), str(tmp_path / "d.jsonl")]) == 0
    rec = json.loads((tmp_path / "d.jsonl").read_text())
    assert rec["id"] == "d1:M0" and rec["human"]["relevance"] == 4


def test_make_synthetic_then_score(tmp_path):
    out = tmp_path / "syn"
    assert main(["make-synthetic", "--n", "12", "--out-dir", str(out), "--orderings", "ascending,reversed"]) == 0
    assert main(["score", "--source", "replay", "--fixtures", str(out / "fixtures.jsonl"),
                 "--dataset", str(out / "dataset.jsonl"), "--orderings", "ascending,reversed",
                 "--shuffles", "1000", "--output-dir", str(tmp_path / "run"), "--formats", "json"]) == 0
    report = json.loads((tmp_path / "run" / "report.json").read_text())
    assert {r["variant"] for r in report["rows"]} == {"ascending", "reversed", "average"}


@pytest.fixture
def mock_remote(monkeypatch):
    """Route every httpx client to a fake completions endpoint backed by demo20 fixtures."""
    store = FixtureStore(DEMO / "fixtures.jsonl", min_candidates=1)
    seen = []
    real_client = httpx.Client

    def handler(request):
        body = json.loads(request.content)
        seen.append(body)
        top = [{"token": t, "logprob": lp} for t, lp in store.get(body["prompt"])[: body["logprobs"]]]
        return httpx.Response(200, json={"choices": [{"logprobs": {"top_logprobs": [top]}}]})

    monkeypatch.setattr(httpx, "Client",
                        lambda **kw: real_client(transport=httpx.MockTransport(handler), **kw))
    return seen


def test_record_fixtures_then_replay(tmp_path, mock_remote):
    rec = tmp_path / "rec.jsonl"
    common = ["--config", str(DEMO / "config.json"), "--dataset", str(DEMO / "dataset.jsonl")]
    assert main(["record-fixtures", *common, "--source", "remote",
                 "--endpoint-url", "http://llm.test/v1/completions", "--model", "m", "--k", "11", "--record", str(rec)]) == 0
    # every synthetic candidate is requested so the recording equals the source fixtures
    assert len(mock_remote) == 240 and all(b["max_tokens"] == 1 and b["logprobs"] == 11 for b in mock_remote)
    assert len(FixtureStore(rec)) == 240
    assert main(["score", *common, "--fixtures", str(rec), "--output-dir", str(tmp_path / "run")]) == 0
    assert (tmp_path / "run" / "report.json").read_bytes() == (GOLDEN / "demo20_report.json").read_bytes()


def test_record_needs_remote(tmp_path):
    assert main(["record-fixtures", "--config", str(DEMO / "config.json"),
                 "--dataset", str(DEMO / "dataset.jsonl")]) == 2
