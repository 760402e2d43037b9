"""Command-line entry points, exercised in-process through main()."""

import json

import pytest

from claimgate.cli import main
from claimgate.config import GateConfig, load_config
from claimgate.trace import load_trace_records


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("CONFIG", "OUT", "SEED", "WORKERS"):
        monkeypatch.delenv(f"CLAIMGATE_{name}", raising=False)


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def simulate(capsys, out_dir, *extra):
    return run_cli(
        capsys, "simulate", "--scenes", "6", "--out", str(out_dir), *extra
    )


def stripped_records(path):
    # sink order follows worker completion, so key by sample instead
    records, problems = load_trace_records(path)
    assert problems == []
    for record in records:
        for rnd in record.get("rounds", []):
            rnd.pop("latency_ms", None)
    return sorted(records, key=lambda r: r["sample_id"])


class TestValidateConfig:
    def test_default_ok(self, capsys):
        code, out, err = run_cli(capsys, "validate-config")
        assert code == 0
        assert out.startswith(f"config ok (hash {GateConfig().config_hash()})")

    def test_write_round_trips(self, capsys, tmp_path):
        target = tmp_path / "cfg.toml"
        code, out, _ = run_cli(capsys, "validate-config", "--write", str(target))
        assert code == 0
        assert load_config(target).config_hash() == GateConfig().config_hash()

    def test_gate_override_changes_hash(self, capsys, tmp_path):
        code, out, _ = run_cli(capsys, "validate-config", "--gate", "existence=0.9")
        assert code == 0
        assert GateConfig().config_hash() not in out

    def test_unknown_gate_type_exits_2(self, capsys):
        code, out, err = run_cli(capsys, "validate-config", "--gate", "vibes=0.9")
        assert code == 2
        assert "config error: --gate: unknown claim type 'vibes'" in err

    def test_non_numeric_gate_exits_2(self, capsys):
        code, _, err = run_cli(capsys, "validate-config", "--gate", "existence=high")
        assert code == 2
        assert err.startswith("config error:")

    def test_missing_config_file_exits_2(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys, "validate-config", "--config", str(tmp_path / "absent.toml")
        )
        assert code == 2
        assert "config error: cannot read config file" in err

    def test_invalid_field_value_exits_2(self, capsys, tmp_path):
        bad = tmp_path / "bad.toml"
        bad.write_text("max_rounds = 0\n")
        code, _, err = run_cli(capsys, "validate-config", "--config", str(bad))
        assert code == 2
        assert "config error:" in err

    def test_ablate_switch_accepted(self, capsys):
        code, out, _ = run_cli(capsys, "validate-config", "--ablate", "use_grounding=off")
        assert code == 0

    def test_unknown_ablate_switch_exits_2(self, capsys):
        code, _, err = run_cli(capsys, "validate-config", "--ablate", "use_magic=on")
        assert code == 2
        assert "unknown switch 'use_magic'" in err


class TestSimulate:
    def test_clean_run_all_correct(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = simulate(capsys, out_dir)
        assert code == 0
        lines = out.strip().splitlines()
        summary = json.loads(lines[-2])
        assert summary["samples"] == 6
        assert summary["accuracy"] == 100.0
        assert set(summary["stop_reasons"]) <= {"stable_supported", "no_stronger_evidence"}
        assert lines[-1] == f"traces: {out_dir / 'traces.jsonl'}"
        assert (out_dir / "traces.jsonl").exists()
        manifest = json.loads((out_dir / "manifest.json").read_text())
        assert manifest["command"] == "simulate"
        assert manifest["samples"] == 6
        assert manifest["config_hash"] == GateConfig().config_hash()
        assert "judge" in manifest["backend_bindings"]

    def test_traces_carry_gold_labels(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        simulate(capsys, out_dir)
        records, _ = load_trace_records(out_dir / "traces.jsonl")
        assert len(records) == 6
        assert all(r["gold_label"] in ("Yes", "No") for r in records)

    def test_deterministic_modulo_latency(self, capsys, tmp_path):
        simulate(capsys, tmp_path / "a", "--init-wrong-rate", "0.5", "--seed", "3")
        simulate(capsys, tmp_path / "b", "--init-wrong-rate", "0.5", "--seed", "3")
        assert stripped_records(tmp_path / "a" / "traces.jsonl") == stripped_records(
            tmp_path / "b" / "traces.jsonl"
        )

    def test_seed_changes_runs(self, capsys, tmp_path):
        simulate(capsys, tmp_path / "a", "--seed", "1")
        simulate(capsys, tmp_path / "b", "--seed", "2")
        a = stripped_records(tmp_path / "a" / "traces.jsonl")
        b = stripped_records(tmp_path / "b" / "traces.jsonl")
        assert [r["question"] for r in a] != [r["question"] for r in b]

    def test_init_wrong_rate_corrected(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        code, out, _ = simulate(capsys, out_dir, "--init-wrong-rate", "1.0")
        assert code == 0
        summary = json.loads(out.strip().splitlines()[-2])
        assert summary["initial_accuracy"] == 0.0
        assert summary["accuracy"] == 100.0
        assert summary["transitions"]["error_corrected"] == 6
        assert summary["transitions"]["over_corrected"] == 0

    def test_env_out_and_seed(self, capsys, tmp_path, monkeypatch):
        out_dir = tmp_path / "env_out"
        monkeypatch.setenv("CLAIMGATE_OUT", str(out_dir))
        monkeypatch.setenv("CLAIMGATE_SEED", "3")
        monkeypatch.setenv("CLAIMGATE_WORKERS", "1")
        code, out, _ = run_cli(capsys, "simulate", "--scenes", "2")
        assert code == 0
        assert (out_dir / "traces.jsonl").exists()
        assert json.loads((out_dir / "manifest.json").read_text())["seed"] == 3

    def test_artifacts_externalized(self, capsys, tmp_path):
        out_dir = tmp_path / "out"
        simulate(capsys, out_dir)
        assert list((out_dir / "artifacts").glob("*.png"))
        records, _ = load_trace_records(out_dir / "traces.jsonl")
        for record in records:
            for item in record["evidence"]:
                assert item["payload"] is None or isinstance(item["payload"], str)


@pytest.fixture
def sim_out(capsys, tmp_path):
    out_dir = tmp_path / "sim"
    code, _, _ = simulate(capsys, out_dir, "--init-wrong-rate", "1.0", "--seed", "7")
    assert code == 0
    capsys.readouterr()
    return out_dir


class TestTraceCommands:
    def test_transitions(self, capsys, sim_out):
        code, out, err = run_cli(
            capsys, "transitions", "--traces", str(sim_out / "traces.jsonl")
        )
        assert code == 0
        assert "error_corrected: 6" in out
        stats = json.loads(out.strip().splitlines()[-1])
        assert stats["total"] == 6

    def test_transitions_without_gold_exits_1(self, capsys, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text(json.dumps({"sample_id": "x", "final_answer": "Yes"}) + "\n")
        code, _, err = run_cli(capsys, "transitions", "--traces", str(path))
        assert code == 1
        assert "no traces carry a gold_label" in err

    def test_efficiency(self, capsys, sim_out):
        code, out, _ = run_cli(
            capsys, "efficiency", "--traces", str(sim_out / "traces.jsonl")
        )
        assert code == 0
        report = json.loads(out.strip().splitlines()[-1])
        checked = [row["checked"] for row in report["rows"]]
        assert checked[0] == 6
        assert all(a >= b for a, b in zip(checked, checked[1:]))

    def test_efficiency_empty_exits_1(self, capsys, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("")
        code, _, err = run_cli(capsys, "efficiency", "--traces", str(path))
        assert code == 1

    def test_render_trace_all(self, capsys, sim_out):
        code, out, _ = run_cli(
            capsys, "render-trace", "--traces", str(sim_out / "traces.jsonl")
        )
        assert code == 0
        assert out.count("stopped after") == 6
        assert "verdict:" in out

    def test_render_trace_single(self, capsys, sim_out):
        records, _ = load_trace_records(sim_out / "traces.jsonl")
        wanted = records[0]["sample_id"]
        code, out, _ = run_cli(
            capsys,
            "render-trace", "--traces", str(sim_out / "traces.jsonl"), "--sample", wanted,
        )
        assert code == 0
        assert out.count("stopped after") == 1
        assert f"sample {wanted}" in out

    def test_render_trace_missing_sample_exits_1(self, capsys, sim_out):
        code, _, err = run_cli(
            capsys,
            "render-trace", "--traces", str(sim_out / "traces.jsonl"), "--sample", "nope",
        )
        assert code == 1
        assert "no trace with sample_id" in err


class TestReplay:
    def test_identity_under_same_config(self, capsys, sim_out):
        code, out, _ = run_cli(capsys, "replay", "--traces", str(sim_out / "traces.jsonl"))
        assert code == 0
        assert "re-gated 6 trace(s)" in out
        assert "0 changed" in out

    def test_raised_gates_block_flips(self, capsys, sim_out, tmp_path):
        out_path = tmp_path / "regated.jsonl"
        code, out, _ = run_cli(
            capsys,
            "replay",
            "--traces", str(sim_out / "traces.jsonl"),
            "--gate", "existence=0.995,count=0.995,color=0.995,position=0.995",
            "--out", str(out_path),
        )
        assert code == 0
        assert "6 changed" in out
        lines = [json.loads(l) for l in out_path.read_text().splitlines()]
        assert len(lines) == 6
        for line in lines:
            assert line["regated_final"] != line["recorded_final"]
            assert "kept_below_gate" in line["gate_decisions"]

    def test_empty_trace_file_exits_1(self, capsys, tmp_path):
        path = tmp_path / "t.jsonl"
        path.write_text("")
        code, _, err = run_cli(capsys, "replay", "--traces", str(path))
        assert code == 1


POPE_ROWS = [
    {"question_id": str(i), "image": f"im{i}.jpg", "question": f"Is there a dog ({i})?",
     "label": "yes" if i % 2 else "no", "source": "coco", "split": "random"}
    for i in range(10)
]


class TestEvalPope:
    def write_dataset(self, tmp_path):
        path = tmp_path / "pope.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in POPE_ROWS))
        return path

    def write_traces(self, tmp_path, name, wrong_ids=()):
        path = tmp_path / name
        rows = []
        for r in POPE_ROWS:
            answer = "Yes" if r["label"] == "yes" else "No"
            if r["question_id"] in wrong_ids:
                answer = "No" if answer == "Yes" else "Yes"
            rows.append({"sample_id": f"pope_{r['question_id']}", "final_answer": answer})
        path.write_text("".join(json.dumps(r) + "\n" for r in rows))
        return path

    def test_scores_traces(self, capsys, tmp_path):
        dataset = self.write_dataset(tmp_path)
        traces = self.write_traces(tmp_path, "t.jsonl", wrong_ids=("0",))
        code, out, _ = run_cli(
            capsys, "eval", "pope", "--dataset", str(dataset), "--traces", str(traces)
        )
        assert code == 0
        assert "accuracy: 90.00 (9/10)" in out
        report = json.loads(out.strip().splitlines()[-1])
        assert report["total"] == 10
        assert report["malformed"] == 0

    def test_missing_answers_are_malformed(self, capsys, tmp_path):
        dataset = self.write_dataset(tmp_path)
        traces = tmp_path / "partial.jsonl"
        traces.write_text(json.dumps({"sample_id": "pope_1", "final_answer": "Yes"}) + "\n")
        code, out, _ = run_cli(
            capsys, "eval", "pope", "--dataset", str(dataset), "--traces", str(traces)
        )
        assert code == 0
        report = json.loads(out.strip().splitlines()[-1])
        assert report["malformed"] == 9

    def test_baseline_delta(self, capsys, tmp_path):
        dataset = self.write_dataset(tmp_path)
        ours = self.write_traces(tmp_path, "ours.jsonl")
        base = self.write_traces(tmp_path, "base.jsonl", wrong_ids=("0", "1"))
        code, out, _ = run_cli(
            capsys,
            "eval", "pope",
            "--dataset", str(dataset), "--traces", str(ours), "--baseline", str(base),
        )
        assert code == 0
        report = json.loads(out.strip().splitlines()[-1])
        assert report["accuracy"] == 100.0
        assert report["baseline_accuracy"] == 80.0
        assert report["delta"] == 20.0


MME_ROWS = [
    {
        "image": "a.jpg",
        "subset": "existence",
        "questions": [
            {"question": "Is there a dog?", "answer": "Yes"},
            {"question": "Is there a cat?", "answer": "No"},
        ],
    },
    {
        "image": "b.jpg",
        "subset": "count",
        "questions": [
            {"question": "Two dogs?", "answer": "Yes"},
            {"question": "Three dogs?", "answer": "No"},
        ],
    },
]


class TestEvalMme:
    def write_dataset(self, tmp_path):
        path = tmp_path / "mme.jsonl"
        path.write_text("".join(json.dumps(r) + "\n" for r in MME_ROWS))
        return path

    def test_scores_by_subset(self, capsys, tmp_path):
        dataset = self.write_dataset(tmp_path)
        traces = tmp_path / "t.jsonl"
        rows = [
            {"sample_id": "mme00000_q0", "final_answer": "Yes"},
            {"sample_id": "mme00000_q1", "final_answer": "No"},
            {"sample_id": "mme00001_q0", "final_answer": "Yes"},
            {"sample_id": "mme00001_q1", "final_answer": "Yes"},
        ]
        traces.write_text("".join(json.dumps(r) + "\n" for r in rows))
        code, out, _ = run_cli(
            capsys, "eval", "mme", "--dataset", str(dataset), "--traces", str(traces)
        )
        assert code == 0
        assert "existence: 200.00" in out
        assert "count: 50.00" in out
        report = json.loads(out.strip().splitlines()[-1])
        assert report["total"] == 250.0

    def test_missing_prediction_exits_1(self, capsys, tmp_path):
        dataset = self.write_dataset(tmp_path)
        traces = tmp_path / "t.jsonl"
        traces.write_text(json.dumps({"sample_id": "mme00000_q0", "final_answer": "Yes"}) + "\n")
        code, _, err = run_cli(
            capsys, "eval", "mme", "--dataset", str(dataset), "--traces", str(traces)
        )
        assert code == 1
        assert "lacks predictions" in err


class TestRunCommand:
    def test_needs_inputs(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys,
            "run", "--out", str(tmp_path / "o"),
            "--endpoint", "chat=http://x/v1/chat,grounder=http://x/v1/segment",
        )
        assert code == 2
        assert "need --dataset or both --image and --question" in err

    def test_missing_endpoints_config_error(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys,
            "run", "--image", "a.jpg", "--question", "Is there a dog?",
            "--out", str(tmp_path / "o"),
        )
        assert code == 2
        assert "config error:" in err
        assert "initializer" in err

    def test_unknown_endpoint_role(self, capsys, tmp_path):
        code, _, err = run_cli(
            capsys,
            "run", "--image", "a.jpg", "--question", "q",
            "--out", str(tmp_path / "o"),
            "--endpoint", "chat=http://x,grounder=http://y,psychic=http://z",
        )
        assert code == 2
        assert "unknown role 'psychic'" in err
