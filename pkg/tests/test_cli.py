import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from scihier.cli import main
from scihier.corpus import save_corpus

from conftest import make_corpus


@pytest.fixture
def runner():
    return CliRunner()


def _corpus_file(tmp_path, n=30, **kw) -> Path:
    path = tmp_path / "corpus.jsonl"
    save_corpus(make_corpus(n, seed=5, **kw), path)
    return path


def _pipeline(runner, tmp_path, seed=0):
    """ingest -> extract -> embed -> build; returns the artifact paths."""
    corpus_in = _corpus_file(tmp_path)
    filtered = tmp_path / "filtered.jsonl"
    contribs = tmp_path / "contribs.jsonl"
    vectors = tmp_path / "vectors"
    hierarchy = tmp_path / "hierarchy.json"
    steps = [
        ["ingest", "--input", str(corpus_in), "--output", str(filtered),
         "--min-abstract-tokens", "5"],
        ["--seed", str(seed), "--mock", "extract", "--corpus", str(filtered),
         "--output", str(contribs)],
        ["--seed", str(seed), "embed", "--contributions", str(contribs),
         "--type", "problem", "--output", str(vectors), "--dim", "8"],
        ["--seed", str(seed), "--mock", "build", "--corpus", str(filtered),
         "--vectors", str(vectors), "--layers", "3,9", "--type", "problem",
         "--output", str(hierarchy)],
    ]
    for args in steps:
        result = runner.invoke(main, args, catch_exceptions=False)
        assert result.exit_code == 0, result.output
    return filtered, contribs, vectors, hierarchy


class TestCliPipeline:
    def test_full_pipeline_and_eval(self, runner, tmp_path):
        filtered, _, _, hierarchy = _pipeline(runner, tmp_path)
        out_dir = tmp_path / "eval"
        result = runner.invoke(main, [
            "--seed", "0", "eval", "--hierarchy", str(hierarchy),
            "--corpus", str(filtered), "--judge", "oracle", "--runs", "2",
            "--queries", "10", "--output-dir", str(out_dir)],
            catch_exceptions=False)
        assert result.exit_code == 0, result.output
        report = json.loads((out_dir / "report.json").read_text())
        assert report["strict_acc"]["mean"] == 100.0
        assert (out_dir / "traces.jsonl").exists()
        assert (out_dir / "figures" / "accuracy_by_run.png").exists()

    def test_build_reports_summarizer_calls(self, runner, tmp_path):
        _, _, _, hierarchy = _pipeline(runner, tmp_path)
        meta = json.loads(hierarchy.read_text())["meta"]
        assert meta["ledger"]["roles"]["summarizer"]["calls"] == 12

    def test_stats_prints_structure(self, runner, tmp_path):
        _, _, _, hierarchy = _pipeline(runner, tmp_path)
        figure = tmp_path / "widths.png"
        result = runner.invoke(main, ["stats", "--hierarchy", str(hierarchy),
                                      "--figure", str(figure)],
                               catch_exceptions=False)
        assert result.exit_code == 0
        stats = json.loads(result.output)
        assert stats["depth"] == 2
        assert stats["layer_widths"] == {"0": 1, "1": 3, "2": 9}
        assert figure.exists()

    def test_flmsci_par_command(self, runner, tmp_path):
        filtered, contribs, _, _ = _pipeline(runner, tmp_path)
        out = tmp_path / "topics.json"
        result = runner.invoke(main, [
            "--mock", "flmsci", "--contributions", str(contribs), "--variant", "par",
            "--batch-size", "20", "--output", str(out)], catch_exceptions=False)
        assert result.exit_code == 0, result.output
        tree = json.loads(out.read_text())
        assert tree["meta"]["builder"] == "flmsci-parallel"

    def test_ingest_reports_rejections(self, runner, tmp_path):
        corpus_in = _corpus_file(tmp_path, citations=0)
        result = runner.invoke(main, [
            "ingest", "--input", str(corpus_in), "--output",
            str(tmp_path / "out.jsonl"), "--min-abstract-tokens", "5"],
            catch_exceptions=False)
        assert result.exit_code == 0
        assert "kept 0" in result.output


class TestCliErrors:
    def test_unknown_command(self, runner):
        assert runner.invoke(main, ["frobnicate"]).exit_code != 0

    def test_build_without_layers(self, runner, tmp_path):
        corpus_in = _corpus_file(tmp_path)
        result = runner.invoke(main, [
            "--mock", "build", "--corpus", str(corpus_in), "--vectors", "x",
            "--type", "problem", "--mode", "hybrid", "--output", "h.json"])
        assert result.exit_code != 0
        assert "--layers" in result.output

    def test_no_provider_configured(self, runner, tmp_path):
        corpus_in = _corpus_file(tmp_path)
        result = runner.invoke(main, [
            "extract", "--corpus", str(corpus_in),
            "--output", str(tmp_path / "c.jsonl")])
        assert result.exit_code != 0
        assert "--mock or --config" in result.output

    def test_missing_input_file(self, runner, tmp_path):
        result = runner.invoke(main, [
            "ingest", "--input", str(tmp_path / "nope.jsonl"),
            "--output", str(tmp_path / "out.jsonl")])
        assert result.exit_code != 0

    def test_eval_judge_choices_enforced(self, runner, tmp_path):
        _, _, _, hierarchy = _pipeline(runner, tmp_path)
        result = runner.invoke(main, [
            "eval", "--hierarchy", str(hierarchy), "--corpus", str(hierarchy),
            "--judge", "psychic", "--output-dir", str(tmp_path / "e")])
        assert result.exit_code != 0
