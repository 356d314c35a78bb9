"""CLI tests: exit codes, outputs, and report determinism."""

import json

import pytest

from memaug.cli import main

from synthetic import build_qa_fixture, build_rec_fixture


def write_items_jsonl(path, contents):
    lines = [
        json.dumps({"id": f"m{i}", "kind": "entity", "content": content})
        for i, content in enumerate(contents)
    ]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def write_mock_rules(path, rules, capture_persons=False):
    payload = {
        "rules": {token: list(pair) for token, pair in rules.items()},
        "capture_persons": capture_persons,
    }
    path.write_text(json.dumps(payload), encoding="utf-8")
    return path


class TestAugmentCommand:
    def test_success_on_ten_item_fixture(self, tmp_path, capsys):
        contents = [f"number {i} was a great thriller" for i in range(10)]
        source = write_items_jsonl(tmp_path / "items.jsonl", contents)
        store = tmp_path / "store.jsonl"
        code = main([
            "augment", "--input", str(source), "--store", str(store),
            "--perspective", "entity", "--granularity", "na",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "augmented 10/10" in out
        assert store.exists()
        report = json.loads((tmp_path / "store.jsonl.report.json").read_text())
        assert report["total"] == 10

    def test_threshold_breach_exit_code(self, tmp_path):
        source = write_items_jsonl(tmp_path / "items.jsonl", ["a great thriller", "zzz qqq"])
        code = main([
            "augment", "--input", str(source), "--store", str(tmp_path / "out.jsonl"),
            "--perspective", "entity", "--granularity", "na",
            "--max-retries", "0", "--max-failure-rate", "0.0",
        ])
        assert code == 4

    def test_missing_input_exit_code(self, tmp_path, capsys):
        code = main([
            "augment", "--input", str(tmp_path / "missing.jsonl"),
            "--store", str(tmp_path / "out.jsonl"),
        ])
        assert code == 2
        assert "not found" in capsys.readouterr().err

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as exc_info:
            main(["augment", "--input"])  # missing value
        assert exc_info.value.code == 1


class TestStatsCommand:
    def test_stats_output(self, tmp_path, capsys):
        source = write_items_jsonl(tmp_path / "items.jsonl", ["a great thriller", "a fine comedy"])
        store = tmp_path / "store.jsonl"
        main([
            "augment", "--input", str(source), "--store", str(store),
            "--perspective", "entity", "--granularity", "na",
        ])
        capsys.readouterr()
        code = main(["stats", "--store", str(store), "--json"])
        assert code == 0
        stats = json.loads(capsys.readouterr().out)
        assert stats["total_items"] == 2
        assert stats["failure_rate"] == 0.0
        names = [row["name"] for row in stats["top_attributes"]]
        assert "genre" in names


class TestIndexAndRetrieve:
    @pytest.fixture
    def store_path(self, tmp_path):
        source = write_items_jsonl(
            tmp_path / "items.jsonl",
            [
                "a great thriller",
                "a boring drama",
                "a fine comedy",
                "an action romp",
                "a horror night",
            ],
        )
        store = tmp_path / "store.jsonl"
        main([
            "augment", "--input", str(source), "--store", str(store),
            "--perspective", "entity", "--granularity", "na",
        ])
        return store

    def test_comprehensive_prints_all(self, store_path, capsys):
        capsys.readouterr()
        code = main([
            "retrieve", "whatever", "--store", str(store_path), "--mode", "comprehensive",
        ])
        assert code == 0
        lines = [line for line in capsys.readouterr().out.splitlines() if line.strip()]
        assert len(lines) == 5

    def test_embedding_mode(self, store_path, tmp_path, capsys):
        index_path = tmp_path / "index.json"
        code = main([
            "index", "--store", str(store_path), "--out", str(index_path),
            "--strategy", "averaged", "--dim", "8",
        ])
        assert code == 0
        capsys.readouterr()
        code = main([
            "retrieve", "looking for a thriller", "--store", str(store_path),
            "--mode", "embedding", "--index", str(index_path), "--k", "3", "--json",
        ])
        assert code == 0
        hits = json.loads(capsys.readouterr().out)
        assert len(hits) == 3
        scores = [hit["score"] for hit in hits]
        assert scores == sorted(scores, reverse=True)

    def test_attribute_mode_empty_query_exit(self, store_path, capsys):
        capsys.readouterr()
        code = main([
            "retrieve", "nothing matches this", "--store", str(store_path),
            "--mode", "attribute",
        ])
        assert code == 1

    def test_attribute_mode_finds_genre(self, store_path, capsys):
        capsys.readouterr()
        code = main([
            "retrieve", "which comedy", "--store", str(store_path), "--mode", "attribute",
        ])
        assert code == 0
        out = capsys.readouterr().out
        assert "m2" in out


class TestEvalCommand:
    def _qa_paths(self, tmp_path):
        data, rules = build_qa_fixture(n_turns=20, n_sessions=4)
        dataset = tmp_path / "dataset.json"
        dataset.write_text(json.dumps(data), encoding="utf-8")
        rules_path = write_mock_rules(tmp_path / "rules.json", rules)
        return dataset, rules_path

    def test_qa_embedding_recall_one(self, tmp_path, capsys):
        dataset, rules_path = self._qa_paths(tmp_path)
        out_dir = tmp_path / "reports"
        code = main([
            "eval", "--task", "qa", "--dataset", str(dataset),
            "--mode", "embedding", "--strategy", "averaged",
            "--dim", "64", "--query-parts", "text", "--k", "5",
            "--mock-rules", str(rules_path),
            "--out-dir", str(out_dir), "--no-timestamp",
        ])
        assert code == 0
        report = json.loads((out_dir / "qa.json").read_text())
        assert report["recall"]["overall"] == 1.0
        assert (out_dir / "qa_report.txt").exists()
        assert (out_dir / "config.json").exists()

    def test_qa_attribute_recall_one(self, tmp_path):
        dataset, rules_path = self._qa_paths(tmp_path)
        out_dir = tmp_path / "reports"
        code = main([
            "eval", "--task", "qa", "--dataset", str(dataset),
            "--mode", "attribute", "--k", "5",
            "--mock-rules", str(rules_path),
            "--out-dir", str(out_dir), "--no-timestamp",
        ])
        assert code == 0
        report = json.loads((out_dir / "qa.json").read_text())
        assert report["recall"]["overall"] == 1.0

    def test_deterministic_reports(self, tmp_path):
        dataset, rules_path = self._qa_paths(tmp_path)
        args_template = [
            "eval", "--task", "qa", "--dataset", str(dataset),
            "--mode", "embedding", "--strategy", "averaged",
            "--dim", "64", "--query-parts", "text", "--seed", "0",
            "--mock-rules", str(rules_path), "--no-timestamp",
        ]
        first = tmp_path / "run1"
        second = tmp_path / "run2"
        assert main(args_template + ["--out-dir", str(first)]) == 0
        assert main(args_template + ["--out-dir", str(second)]) == 0
        for name in ("qa.json", "qa_report.txt", "config.json"):
            assert (first / name).read_bytes() == (second / name).read_bytes()

    def test_rec_eval(self, tmp_path):
        data, store, rules = build_rec_fixture(n_dialogues=12, n_items=10)
        dataset = tmp_path / "rec.json"
        dataset.write_text(json.dumps(data), encoding="utf-8")
        store_path = tmp_path / "store.jsonl"
        store.save(store_path)
        rules_path = write_mock_rules(tmp_path / "rules.json", rules)
        out_dir = tmp_path / "reports"
        code = main([
            "eval", "--task", "rec", "--dataset", str(dataset),
            "--store", str(store_path),
            "--mode", "embedding", "--strategy", "averaged", "--dim", "8",
            "--n", "8", "--seed", "0",
            "--mock-rules", str(rules_path),
            "--out-dir", str(out_dir), "--no-timestamp",
        ])
        assert code == 0
        report = json.loads((out_dir / "rec.json").read_text())
        assert report["metrics"]["recall@1"]["overall"] == 1.0
        assert report["avg_items_retrieved"] == 10.0

    def test_rec_n_too_large_fails_before_work(self, tmp_path, capsys):
        data, store, rules = build_rec_fixture(n_dialogues=4, n_items=5)
        dataset = tmp_path / "rec.json"
        dataset.write_text(json.dumps(data), encoding="utf-8")
        code = main([
            "eval", "--task", "rec", "--dataset", str(dataset),
            "--mode", "comprehensive", "--n", "50",
            "--out-dir", str(tmp_path / "reports"), "--no-timestamp",
        ])
        assert code == 1
        assert not (tmp_path / "reports").exists()

    def test_events_without_event_annotations_warns_but_succeeds(self, tmp_path, capsys):
        payload = {
            "sessions": [
                {
                    "session_id": "s1",
                    "turns": [{"turn_id": "t1", "speaker": "a", "text": "mood stuff"}],
                }
            ],
            "events": [],
        }
        dataset = tmp_path / "d.json"
        dataset.write_text(json.dumps(payload), encoding="utf-8")
        rules_path = write_mock_rules(tmp_path / "rules.json", {"mood": ["emotion", "calm"]})
        out_dir = tmp_path / "reports"
        code = main([
            "eval", "--task", "events", "--dataset", str(dataset),
            "--granularity", "session", "--mock-rules", str(rules_path),
            "--out-dir", str(out_dir), "--no-timestamp",
        ])
        assert code == 0
        report = json.loads((out_dir / "events.json").read_text())
        assert report["skipped"] == 1
        assert "skipped" in capsys.readouterr().err


class TestConfigFile:
    def test_config_supplies_defaults_flags_override(self, tmp_path, capsys):
        source = write_items_jsonl(tmp_path / "items.jsonl", ["a fine comedy"])
        store = tmp_path / "store.jsonl"
        config = tmp_path / "memaug.ini"
        config.write_text("[memaug]\nperspective = entity\ngranularity = na\nmax_retries = 0\n")
        code = main([
            "--config", str(config),
            "augment", "--input", str(source), "--store", str(store),
        ])
        assert code == 0
        report = json.loads((tmp_path / "store.jsonl.report.json").read_text())
        assert report["failed"] == 0

    def test_missing_config_file(self, tmp_path, capsys):
        code = main([
            "--config", str(tmp_path / "none.ini"),
            "stats", "--store", str(tmp_path / "s.jsonl"),
        ])
        assert code == 2
