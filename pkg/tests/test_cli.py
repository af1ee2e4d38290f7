import json

import pytest

from lifeguard.cli import main
from lifeguard.messages import load_trace, parse_trace, serialize_trace


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


class TestVerifyCommand:
    def test_safe_exits_zero(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "verify",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"),
                               "--mode", "exhaustive")
        assert code == 0
        assert "Safe" in out

    def test_violation_exits_one_and_writes_witness(self, capsys, fixtures_dir, tmp_path):
        witness_path = tmp_path / "w.trace"
        code, out, _ = run_cli(capsys, "verify",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_buggy.trace"),
                               "--mode", "exhaustive",
                               "--witness-out", str(witness_path))
        assert code == 1
        assert "Violation" in out
        witness = load_trace(witness_path)
        assert witness.messages[-1].is_dis()
        assert "execute" in str(witness.messages[-1])

    def test_json_report_schema(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "verify",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_buggy.trace"),
                               "--report", "json")
        assert code == 1
        doc = json.loads(out)
        assert doc["schema"] == 1
        assert doc["verdict"] == "violation"
        assert doc["subtrace_sequence"] == [1, 2, 2]

    def test_bounded_unknown_exits_two(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "verify",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_buggy.trace"),
                               "--mode", "bounded:2")
        assert code == 2
        assert "Unknown" in out

    def test_text_and_json_verdicts_agree(self, capsys, fixtures_dir):
        _, text_out, _ = run_cli(capsys, "verify",
                                 "--spec", str(fixtures_dir / "spec_run.ls"),
                                 "--trace", str(fixtures_dir / "trace_fixed.trace"))
        _, json_out, _ = run_cli(capsys, "verify",
                                 "--spec", str(fixtures_dir / "spec_run.ls"),
                                 "--trace", str(fixtures_dir / "trace_fixed.trace"),
                                 "--report", "json")
        assert "Safe" in text_out
        assert json.loads(json_out)["verdict"] == "safe"


class TestValidateCommand:
    def test_valid_exits_zero(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "validate",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"))
        assert code == 0
        assert "valid" in out

    def test_invalid_prefix_report(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "validate",
                               "--spec", str(fixtures_dir / "spec_run_noenable.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"))
        assert code == 1
        assert "onPostExecute" in out
        assert "12/16" in out

    def test_corpus_mode(self, capsys, fixtures_dir, tmp_path):
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        fixed = (fixtures_dir / "trace_fixed.trace").read_text()
        buggy = (fixtures_dir / "trace_buggy.trace").read_text()
        (corpus / "b_fixed.trace").write_text(fixed)
        (corpus / "a_buggy.trace").write_text(buggy)
        code, out, _ = run_cli(capsys, "validate",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--corpus", str(corpus),
                               "--jobs", "2",
                               "--report", "json")
        assert code == 0
        doc = json.loads(out)
        assert doc["valid"] == 2 and doc["total"] == 2
        # reports sorted by trace path regardless of execution order
        paths = [r["trace"] for r in doc["results"]]
        assert paths == sorted(paths)
        assert "prefix_histogram" in doc
        assert doc["prefix_histogram"][">=1"] == 2

    def test_needs_exactly_one_input(self, capsys, fixtures_dir, tmp_path):
        with pytest.raises(SystemExit):
            main(["validate", "--spec", str(fixtures_dir / "spec_run.ls")])


class TestRunCommand:
    def test_run_fixed_program(self, capsys, fixtures_dir, tmp_path, trace_fixed):
        out_path = tmp_path / "out.trace"
        code, _, err = run_cli(capsys, "run",
                               "--program", str(fixtures_dir / "program_fixed.ll"),
                               "--schedule", "0,0,0",
                               "--max-steps", "500",
                               "--trace-out", str(out_path))
        assert code == 0
        assert "finished" in err
        assert load_trace(out_path) == trace_fixed

    def test_run_schedule_from_file(self, capsys, fixtures_dir, tmp_path):
        out_path = tmp_path / "out.trace"
        code, _, _ = run_cli(capsys, "run",
                             "--program", str(fixtures_dir / "program_buggy.ll"),
                             "--schedule", "@" + str(fixtures_dir / "schedule_double_click.sched"),
                             "--trace-out", str(out_path))
        assert code == 1  # run ends in the bad state
        assert load_trace(out_path).messages[-1].is_dis()

    def test_run_rejects_initless_program(self, capsys, tmp_path):
        prog = tmp_path / "p.ll"
        prog.write_text("let f = (x =>[app] x) in unit\n")
        code, _, err = run_cli(capsys, "run", "--program", str(prog), "--schedule", "0")
        assert code == 2
        assert "init" in err

    def test_malformed_program_exits_two(self, capsys, tmp_path):
        prog = tmp_path / "p.ll"
        prog.write_text("let f = in\n")
        code, _, err = run_cli(capsys, "run", "--program", str(prog), "--schedule", "0")
        assert code == 2
        assert "error" in err


class TestGroundAndExplain:
    def test_ground_dump(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "ground",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"))
        assert code == 0
        assert "-/>" in out and "->" in out
        assert "alphabet" in out

    def test_ground_rules_reparse(self, capsys, fixtures_dir):
        from lifeguard.rules import parse_spec

        code, out, _ = run_cli(capsys, "ground",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"))
        rule_lines = [l for l in out.splitlines() if "->" in l or "-/>" in l]
        parsed = parse_spec("\n".join(rule_lines))
        assert len(parsed.rules) == len(rule_lines)

    def test_explain_valid_trace(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "explain",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"))
        assert code == 0
        assert "fires" in out
        assert "validated to the end" in out

    def test_explain_blocked_trace(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "explain",
                               "--spec", str(fixtures_dir / "spec_run_noenable.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"))
        assert code == 1
        assert "BLOCKED" in out
        assert "permitted-back" in out


class TestErrorPaths:
    def test_missing_file(self, capsys, fixtures_dir):
        code, _, err = run_cli(capsys, "verify",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", "/nonexistent.trace")
        assert code == 2
        assert "error" in err

    def test_malformed_trace(self, capsys, fixtures_dir, tmp_path):
        bad = tmp_path / "bad.trace"
        bad.write_text("ci execute(t#1:AsyncTask)\ncb onClick(l#1:OnClickListener,b#1:Button)\n")
        code, _, err = run_cli(capsys, "validate",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(bad))
        assert code == 2
        assert "line 1" in err


class TestTimeouts:
    def test_sub_second_timeout_is_a_usage_error(self, capsys, fixtures_dir):
        with pytest.raises(SystemExit):
            main(["validate",
                  "--spec", str(fixtures_dir / "spec_run.ls"),
                  "--trace", str(fixtures_dir / "trace_fixed.trace"),
                  "--timeout", "0.5"])

    def test_generous_timeout_still_validates(self, capsys, fixtures_dir):
        code, out, _ = run_cli(capsys, "validate",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--trace", str(fixtures_dir / "trace_fixed.trace"),
                               "--timeout", "60")
        assert code == 0 and "valid" in out

    def test_api_timeout_surfaces_as_unknown_in_corpus_rows(self, capsys, fixtures_dir,
                                                            tmp_path, monkeypatch):
        import lifeguard.cli as cli_mod
        from lifeguard.validation import ValidationTimeout

        def always_times_out(spec, trace, timeout=None):
            raise ValidationTimeout("validation exceeded its time budget at step 0")

        monkeypatch.setattr(cli_mod, "validate", always_times_out)
        corpus = tmp_path / "corpus"
        corpus.mkdir()
        (corpus / "x.trace").write_text((fixtures_dir / "trace_fixed.trace").read_text())
        code, out, _ = run_cli(capsys, "validate",
                               "--spec", str(fixtures_dir / "spec_run.ls"),
                               "--corpus", str(corpus),
                               "--timeout", "1",
                               "--report", "json")
        doc = json.loads(out)
        assert doc["results"][0]["verdict"] == "unknown"
        assert code == 1
