import json

import pytest

from coxql.cli import main


def test_parse(capsys):
    assert main(["parse", "filter id 3 and nlpattribute default"]) == 0
    out = capsys.readouterr().out
    assert "canonical: filter id 3 and nlpattribute all default" in out
    assert main(["parse", "score accuracy f1"]) == 1
    assert "SlotArity" in capsys.readouterr().out
    assert main(["parse", "mistake accuracy"]) == 1


def test_stats(capsys):
    assert main(["stats", "sample", "--format", "json"]) == 0
    stats = json.loads(capsys.readouterr().out)
    assert stats["examples"] == 321 and stats["rejects"] == []
    assert main(["stats", "sample", "--split", "test"]) == 0
    assert "examples: 69" in capsys.readouterr().out


def test_stats_missing_file_exit_code(tmp_path, capsys):
    assert main(["stats", str(tmp_path / "none.jsonl")]) == 2


def test_eval_and_report(tmp_path, capsys):
    out = tmp_path / "r.json"
    rc = main(["eval", "--strategy", "nn", "--strategy", "mp+", "--train", "sample", "--test", "sample",
               "--out", str(out), "--report-dir", str(tmp_path / "rep")])
    assert rc == 0
    text = capsys.readouterr().out
    assert "exact match: 100.00%" in text
    data = json.loads(out.read_text())
    assert [r["strategy"] for r in data] == ["nn", "mp+"]
    for name in ("accuracy.csv", "category_f1.csv", "accuracy.png", "category_f1.png"):
        assert (tmp_path / "rep" / name).stat().st_size > 0
    assert main(["report", str(out), "--out-dir", str(tmp_path / "rep2")]) == 0
    assert (tmp_path / "rep2" / "accuracy.png").exists()
    header = (tmp_path / "rep2" / "accuracy.csv").read_text().splitlines()[0]
    assert header == "model,nn,mp+"


def test_eval_corrupting_config(tmp_path, capsys):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[backend]\nkind=corrupting\n[corruption]\nrate=0.5\nseed=2\n[repair]\ntopk_from_question=off\n")
    assert main(["eval", "--strategy", "mp", "--strategy", "mp+", "--test", "sample", "--train", "sample",
                 "--config", str(cfg)]) == 0
    assert "corrupt[" in capsys.readouterr().out


def test_eval_backend_unreachable(tmp_path, capsys):
    cfg = tmp_path / "h.ini"
    cfg.write_text("[backend]\nkind=http\nurl=http://127.0.0.1:9/v1\ntimeout=0.2\nmax_concurrency=8\n")
    assert main(["eval", "--strategy", "mp", "--test", "sample", "--train", "sample", "--config", str(cfg)]) == 3


def test_eval_bad_config(tmp_path):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[backend]\nkind=http\n")
    assert main(["eval", "--strategy", "mp", "--test", "sample", "--config", str(cfg)]) == 2
    assert main(["eval", "--strategy", "mp", "--test", "sample", "--config", str(tmp_path / "nope.ini")]) == 2


def test_corrupt_suite_cli(tmp_path, capsys):
    prof = tmp_path / "p.ini"
    prof.write_text("[corruption]\nMissingTopK=1.0\nExtraMetric=1.0\nseed=4\nmixed_rate=0.7\n")
    assert main(["corrupt-suite", "--profile", str(prof), "--seeds", "2", "--report-dir", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "MissingTopK" in out and "MissingId" not in out and "repair guarantee: ok" in out
    assert (tmp_path / "corrupt_suite.png").exists()


def test_repl(monkeypatch, capsys):
    import io
    monkeypatch.setattr("sys.stdin", io.StringIO("Top 3 important features for id 3!\n\n"))
    assert main(["repl", "--strategy", "mp+", "--train", "sample", "--gold", "sample", "--trace"]) == 0
    out = capsys.readouterr().out
    assert "filter id 3 and nlpattribute topk 3 default" in out and "validate" in out


def test_report_bad_input(tmp_path):
    bad = tmp_path / "x.json"
    bad.write_text("{")
    assert main(["report", str(bad)]) == 2


def test_requires_subcommand():
    with pytest.raises(SystemExit):
        main([])
