import csv
import json

import pytest

from tutorkit import telemetry as tm
from tutorkit.cli import main
from tutorkit.index import load_snapshot

from loggen import build_deployment_log


@pytest.fixture
def corpus_dir(tmp_path):
    corpus = tmp_path / "corpus"
    corpus.mkdir()
    (corpus / "week1.txt").write_text(
        "path: slides/week1.txt\nkind: slides\n\n"
        "=== unit 1 ===\nSampling theorem and aliasing.\n"
        "=== unit 2 ===\nQuantization noise analysis.\n"
    )
    (corpus / "week2.txt").write_text(
        "path: slides/week2.txt\nkind: slides\n\n"
        "=== unit 1 ===\nMotion estimation for video compression.\n"
    )
    return corpus


@pytest.fixture
def log_file(tmp_path):
    path = tmp_path / "queries.jsonl"
    with open(path, "w") as f:
        for record in build_deployment_log():
            f.write(tm.record_to_json(record) + "\n")
    return path


class TestIngestQueryUpdate:
    def test_ingest_then_query(self, corpus_dir, tmp_path, capsys):
        snap = tmp_path / "snap.json"
        assert main(["ingest", "--corpus", str(corpus_dir), "--out", str(snap), "--mock-embedder"]) == 0
        out = capsys.readouterr().out
        assert "3 chunks" in out
        snapshot = load_snapshot(snap)
        assert len(snapshot.chunks) == 3

        assert main(["query", "--snapshot", str(snap), "--q", "aliasing", "--mock-embedder"]) == 0
        out = capsys.readouterr().out
        assert "slides/week1.txt" in out

    def test_query_explain_shows_stage_scores(self, corpus_dir, tmp_path, capsys):
        snap = tmp_path / "snap.json"
        main(["ingest", "--corpus", str(corpus_dir), "--out", str(snap), "--mock-embedder"])
        capsys.readouterr()
        assert main(
            ["query", "--snapshot", str(snap), "--q", "video compression", "--mock-embedder", "--explain"]
        ) == 0
        out = capsys.readouterr().out
        assert "keyword" in out and "vector" in out and "fused" in out

    def test_update_adds_documents(self, corpus_dir, tmp_path, capsys):
        snap = tmp_path / "snap.json"
        main(["ingest", "--corpus", str(corpus_dir), "--out", str(snap), "--mock-embedder"])
        extra = tmp_path / "extra"
        extra.mkdir()
        (extra / "week3.txt").write_text(
            "path: slides/week3.txt\nkind: slides\n\n=== unit 1 ===\nChroma subsampling.\n"
        )
        out_snap = tmp_path / "snap2.json"
        assert main(
            ["update", "--snapshot", str(snap), "--add", str(extra), "--out", str(out_snap), "--mock-embedder"]
        ) == 0
        assert len(load_snapshot(out_snap).chunks) == 4

    def test_missing_corpus_dir_is_error(self, tmp_path, capsys):
        assert main(["ingest", "--corpus", str(tmp_path / "nope"), "--out", "x", "--mock-embedder"]) == 2
        assert "error:" in capsys.readouterr().err


class TestAnalyze:
    def test_usage_summary_and_csv(self, log_file, tmp_path, capsys):
        out_csv = tmp_path / "daily.csv"
        assert main(
            ["analyze", "usage", "--log", str(log_file), "--cohort", "43", "--csv", str(out_csv)]
        ) == 0
        out = capsys.readouterr().out
        assert "queries: 1889" in out
        assert "sessions: 296" in out
        assert "queries/student: 43.9" in out
        with open(out_csv) as f:
            rows = list(csv.reader(f))
        assert rows[0] == ["date", "queries"]
        assert sum(int(r[1]) for r in rows[1:]) == 1889

    def test_peak_share(self, log_file, capsys):
        assert main(["analyze", "peak", "--log", str(log_file), "--date", "2025-03-19"]) == 0
        out = capsys.readouterr().out
        assert "724 of 1889" in out
        assert "38.3%" in out

    def test_cost_report(self, log_file, tmp_path, capsys):
        prices = tmp_path / "prices.json"
        prices.write_text(json.dumps({"price_in_per_1k": 0.10, "price_out_per_1k": 0.40}))
        assert main(
            ["analyze", "cost", "--log", str(log_file), "--fixed", "834.77", "--config", str(prices)]
        ) == 0
        out = capsys.readouterr().out
        assert "per query: 0.445" in out
        assert "token per query: 0.0033" in out


class TestEval:
    def test_permtest(self, tmp_path, capsys):
        path = tmp_path / "scores.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["subject", "exam1", "exam2"])
            for i, (a, b) in enumerate([(55, 52), (61, 64), (70, 68), (48, 50), (66, 61)]):
                writer.writerow([i, a, b])
        assert main(["eval", "permtest", "--csv", str(path), "--col-a", "exam1", "--col-b", "exam2"]) == 0
        out = capsys.readouterr().out
        assert "t = " in out and "p = " in out and "exhaustive" in out

    def test_likert_with_na(self, tmp_path, capsys):
        path = tmp_path / "survey.csv"
        with open(path, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["Q1"])
            for v in ["5", "4", "4", "N/A"]:
                writer.writerow([v])
        assert main(["eval", "likert", "--csv", str(path), "--col", "Q1"]) == 0
        out = capsys.readouterr().out
        assert "mean = 4.33" in out and "sd = 0.47" in out and "n = 3" in out

    def test_compare(self, tmp_path, capsys):
        ours = tmp_path / "ours.csv"
        theirs = tmp_path / "theirs.csv"
        with open(ours, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["label", "mean", "sd", "n"])
            writer.writerow(["Q2", "4.19", "0.81", "36"])
            writer.writerow(["Q4", "2.78", "1.08", "32"])
            writer.writerow(["Q5", "4.08", "0.86", "36"])
        with open(theirs, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["label", "mean", "sd", "n"])
            writer.writerow(["Q2", "4.4", "0.77", "30"])
            writer.writerow(["Q4", "2.7", "1.14", "30"])
            writer.writerow(["Q5", "4.23", "0.85", "30"])
        assert main(["eval", "compare", "--ours", str(ours), "--theirs", str(theirs)]) == 0
        out = capsys.readouterr().out
        assert "-4.8" in out and "+3.0" in out and "-3.5" in out
        assert "+5.2" in out and "-5.3" in out and "+1.2" in out
