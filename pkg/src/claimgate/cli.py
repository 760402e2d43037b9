"""Command-line surface.

Commands: run, simulate, eval pope, eval mme, transitions, efficiency,
render-trace, replay, validate-config. Every run writes traces plus a
manifest (config hash, template versions, backend bindings) so results can
be reproduced. Config problems exit with code 2 and field diagnostics.

Environment overrides (flags win): CLAIMGATE_CONFIG, CLAIMGATE_OUT,
CLAIMGATE_SEED, CLAIMGATE_WORKERS.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import bench
from .backends import (
    Backends,
    BackendRole,
    HttpChatBackend,
    HttpSegmentBackend,
    ResponseStore,
)
from .config import ConfigError, GateConfig, apply_overrides, load_config, save_config
from .engine import regate_trace, run_many
from .model import BinaryAnswer, ClaimType, Sample
from .prompts import template_versions
from .scenes import make_dataset, make_scene_backends, stable_uniform
from .trace import append_trace, load_trace_records, load_traces, render_trace

ENV_PREFIX = "CLAIMGATE_"


def _env(name: str) -> Optional[str]:
    return os.environ.get(ENV_PREFIX + name)


def _parse_switch(value: str) -> bool:
    lowered = value.strip().lower()
    if lowered in ("on", "true", "1", "yes"):
        return True
    if lowered in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _parse_pairs(values: Sequence[str], flag: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for chunk in values:
        for pair in chunk.split(","):
            pair = pair.strip()
            if not pair:
                continue
            if "=" not in pair:
                raise ConfigError([f"{flag}: expected key=value, got {pair!r}"])
            key, value = pair.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def _load_cfg(args: argparse.Namespace) -> GateConfig:
    config_path = getattr(args, "config", None) or _env("CONFIG")
    cfg = load_config(config_path) if config_path else GateConfig()
    gates = None
    if getattr(args, "gate", None):
        raw = _parse_pairs(args.gate, "--gate")
        try:
            gates = {k: float(v) for k, v in raw.items()}
        except ValueError as exc:
            raise ConfigError([f"--gate: {exc}"]) from exc
    ablate = None
    if getattr(args, "ablate", None):
        raw = _parse_pairs(args.ablate, "--ablate")
        ablate = {k: _parse_switch(v) for k, v in raw.items()}
    return apply_overrides(
        cfg,
        max_rounds=getattr(args, "max_rounds", None),
        gates=gates,
        ablate=ablate,
        ground_conf=getattr(args, "ground_conf", None),
    )


def _out_dir(args: argparse.Namespace) -> Path:
    out = getattr(args, "out", None) or _env("OUT") or "runs/latest"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return args.seed
    env = _env("SEED")
    return int(env) if env else 0


def _workers(args: argparse.Namespace) -> int:
    if getattr(args, "workers", None) is not None:
        return args.workers
    env = _env("WORKERS")
    return int(env) if env else 4


def _write_manifest(
    out_dir: Path, cfg: GateConfig, bindings: dict, command: str, extra: dict
) -> None:
    manifest = {
        "command": command,
        "created_unix": int(time.time()),
        "config": cfg.to_dict(),
        "config_hash": cfg.config_hash(),
        "template_versions": template_versions(),
        "backend_bindings": bindings,
    }
    manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True))


def _endpoint_backends(args: argparse.Namespace) -> Backends:
    pairs = _parse_pairs(getattr(args, "endpoint", None) or [], "--endpoint")
    chat_default = pairs.pop("chat", None)
    roles = {}
    for role in ("initializer", "judge", "refiner", "color_observer"):
        url = pairs.pop(role, chat_default)
        roles[role] = HttpChatBackend(url, model=args.model) if url else None
    grounder_url = pairs.pop("grounder", None)
    if pairs:
        raise ConfigError([f"--endpoint: unknown role {name!r}" for name in sorted(pairs)])
    missing = [r for r in ("initializer", "judge", "refiner") if roles[r] is None]
    if missing:
        raise ConfigError(
            [f"--endpoint: no url bound for required role {r!r} (or chat=...)" for r in missing]
        )
    if grounder_url is None:
        raise ConfigError(["--endpoint: no url bound for required role 'grounder'"])
    return Backends(
        initializer=roles["initializer"],
        judge=roles["judge"],
        refiner=roles["refiner"],
        color_observer=roles["color_observer"],
        grounder=HttpSegmentBackend(grounder_url),
    )


def _trace_sink(out_dir: Path, gold_by_id: dict):
    traces_path = out_dir / "traces.jsonl"
    if traces_path.exists():
        traces_path.unlink()
    artifacts = out_dir / "artifacts"

    def sink(trace) -> None:
        gold = gold_by_id.get(trace.sample_id)
        extra = {"gold_label": gold.value} if gold is not None else None
        append_trace(trace, traces_path, artifact_dir=artifacts, extra=extra)

    return sink, traces_path


def _summarize(traces, gold_by_id: dict) -> dict:
    summary: dict = {"samples": len(traces)}
    stop = {}
    for t in traces:
        stop[t.stop_reason.value] = stop.get(t.stop_reason.value, 0) + 1
    summary["stop_reasons"] = dict(sorted(stop.items()))
    labeled = [(t, gold_by_id.get(t.sample_id)) for t in traces]
    labeled = [(t, g) for t, g in labeled if g is not None]
    if labeled:
        pairs = [(t.initial_answer is g, t.final_answer is g) for t, g in labeled]
        stats = bench.transition_stats(pairs)
        summary["accuracy"] = round(
            100.0 * sum(1 for t, g in labeled if t.final_answer is g) / len(labeled), 2
        )
        summary["initial_accuracy"] = round(
            100.0 * sum(1 for t, g in labeled if t.initial_answer is g) / len(labeled), 2
        )
        summary["transitions"] = stats.to_dict()
    return summary


def _cmd_run(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    out_dir = _out_dir(args)
    backends = _endpoint_backends(args)
    store = None
    if args.record:
        store = ResponseStore()
        backends = backends.recorded(store)

    samples: list[Sample] = []
    gold_by_id: dict = {}
    if args.dataset:
        if args.format == "mme":
            for i, record in enumerate(bench.load_mme_jsonl(args.dataset)):
                for j, (question, gold) in enumerate(record.questions):
                    sid = f"mme{i:05d}_q{j}"
                    samples.append(
                        Sample(
                            sample_id=sid,
                            image_ref=record.image_ref,
                            question=question,
                            benchmark_meta={"subset": record.subset.value},
                        )
                    )
                    gold_by_id[sid] = gold
        else:
            loader = (
                bench.load_pope_community if args.format == "pope-community" else bench.load_pope
            )
            for record in loader(args.dataset):
                sid = f"pope_{record.question_id}"
                samples.append(
                    Sample(
                        sample_id=sid,
                        image_ref=record.image_ref,
                        question=record.question,
                        benchmark_meta={
                            "source": record.source.value,
                            "split": record.split.value,
                        },
                    )
                )
                gold_by_id[sid] = record.label
        if args.limit:
            samples = samples[: args.limit]
    elif args.image and args.question:
        samples.append(Sample(sample_id="single", image_ref=args.image, question=args.question))
    else:
        print("run: need --dataset or both --image and --question", file=sys.stderr)
        return 2

    sink, traces_path = _trace_sink(out_dir, gold_by_id)
    expected = ClaimType(args.expected_type) if args.expected_type else None
    traces = run_many(
        samples, lambda _s: backends, cfg, workers=_workers(args), expected_type=expected, sink=sink
    )
    if store is not None:
        store.save(out_dir / "store.json")
    _write_manifest(
        out_dir,
        cfg,
        backends.bindings(),
        "run",
        {"dataset": args.dataset or "(single)", "samples": len(samples), "seed": _seed(args)},
    )
    summary = _summarize(traces, gold_by_id)
    print(json.dumps(summary, sort_keys=True))
    print(f"traces: {traces_path}")
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    out_dir = _out_dir(args)
    seed = _seed(args)
    pairs = make_dataset(
        args.scenes, seed0=seed, difficulty=args.difficulty, questions=args.questions
    )
    spec_by_id = {sample.sample_id: spec for sample, spec in pairs}
    gold_by_id = {sample.sample_id: sample.gold_label for sample, _ in pairs}
    samples = [sample for sample, _ in pairs]

    def backends_for(sample: Sample) -> Backends:
        wrong = (
            args.init_wrong_rate > 0
            and stable_uniform(seed, "init_wrong", sample.sample_id) < args.init_wrong_rate
        )
        return make_scene_backends(
            spec_by_id[sample.sample_id],
            init_wrong=wrong,
            judge_mode=args.judge_mode,
            judge_flip_p=args.judge_noise,
            grounder_miss=args.grounder_miss,
            grounder_hallucinate=args.grounder_hallucinate,
            grounder_jitter=args.grounder_jitter,
            seed=seed,
        )

    sink, traces_path = _trace_sink(out_dir, gold_by_id)
    traces = run_many(samples, backends_for, cfg, workers=_workers(args), sink=sink)
    bindings = backends_for(samples[0]).bindings() if samples else {}
    _write_manifest(
        out_dir,
        cfg,
        bindings,
        "simulate",
        {
            "scenes": args.scenes,
            "difficulty": args.difficulty,
            "questions": args.questions,
            "samples": len(samples),
            "seed": seed,
            "judge_mode": args.judge_mode,
            "judge_noise": args.judge_noise,
            "init_wrong_rate": args.init_wrong_rate,
        },
    )
    summary = _summarize(traces, gold_by_id)
    print(json.dumps(summary, sort_keys=True))
    print(f"traces: {traces_path}")
    return 0


def _final_answers(traces_path: str) -> dict[str, str]:
    records, problems = load_trace_records(traces_path)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    return {r["sample_id"]: r.get("final_answer", "") for r in records}


def _cmd_eval_pope(args: argparse.Namespace) -> int:
    records = bench.load_pope(args.dataset)
    if not records:
        print("eval pope: empty dataset", file=sys.stderr)
        return 1
    answers = _final_answers(args.traces)
    pairs = [(answers.get(f"pope_{r.question_id}"), r.label) for r in records]
    report = bench.pope_report(pairs)
    if args.baseline:
        base_answers = _final_answers(args.baseline)
        base_pairs = [(base_answers.get(f"pope_{r.question_id}"), r.label) for r in records]
        base = bench.pope_report(base_pairs)
        report["baseline_accuracy"] = base["accuracy"]
        report["delta"] = round(report["accuracy"] - base["accuracy"], 2)
    print(f"accuracy: {report['accuracy']:.2f} ({report['correct']}/{report['total']})")
    print(json.dumps(report, sort_keys=True))
    return 0


def _cmd_eval_mme(args: argparse.Namespace) -> int:
    records = bench.load_mme_jsonl(args.dataset)
    if not records:
        print("eval mme: empty dataset", file=sys.stderr)
        return 1
    answers = _final_answers(args.traces)
    by_subset: dict[str, list] = {}
    for i, record in enumerate(records):
        predictions = (answers.get(f"mme{i:05d}_q0"), answers.get(f"mme{i:05d}_q1"))
        by_subset.setdefault(record.subset.value, []).append((record, predictions))
    report = {}
    for subset, scored in sorted(by_subset.items()):
        try:
            report[subset] = bench.mme_subset_score(scored)
        except bench.MissingPrediction as exc:
            print(f"eval mme: {exc}", file=sys.stderr)
            return 1
        print(f"{subset}: {report[subset]:.2f}")
    report["total"] = round(sum(report.values()), 2)
    print(json.dumps(report, sort_keys=True))
    return 0


def _cmd_transitions(args: argparse.Namespace) -> int:
    records, problems = load_trace_records(args.traces)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    pairs, skipped = bench.transitions_from_records(records)
    if not pairs:
        print("transitions: no traces carry a gold_label", file=sys.stderr)
        return 1
    stats = bench.transition_stats(pairs)
    if skipped:
        print(f"warning: {skipped} trace(s) lacked gold_label", file=sys.stderr)
    for name, count in stats.to_dict().items():
        print(f"{name}: {count}")
    print(json.dumps(stats.to_dict(), sort_keys=True))
    return 0


def _cmd_efficiency(args: argparse.Namespace) -> int:
    traces, problems = load_traces(args.traces)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    if not traces:
        print("efficiency: no traces", file=sys.stderr)
        return 1
    report = bench.efficiency_report(traces)
    print(bench.format_efficiency_table(report))
    print(json.dumps(report, sort_keys=True))
    return 0


def _cmd_render_trace(args: argparse.Namespace) -> int:
    traces, problems = load_traces(args.traces)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    if args.sample:
        traces = [t for t in traces if t.sample_id == args.sample]
        if not traces:
            print(f"render-trace: no trace with sample_id {args.sample!r}", file=sys.stderr)
            return 1
    print("\n\n".join(render_trace(t) for t in traces))
    return 0


def _cmd_replay(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    traces, problems = load_traces(args.traces)
    for problem in problems:
        print(f"warning: {problem}", file=sys.stderr)
    if not traces:
        print("replay: no traces", file=sys.stderr)
        return 1
    out_lines = []
    changed = 0
    for trace in traces:
        answer, decisions = regate_trace(trace, cfg)
        if answer is not trace.final_answer:
            changed += 1
        line = {
            "sample_id": trace.sample_id,
            "recorded_final": trace.final_answer.value,
            "regated_final": answer.value,
            "gate_decisions": [d.value for d in decisions],
        }
        out_lines.append(line)
        print(
            f"{trace.sample_id}: {trace.final_answer.value} -> {answer.value}"
            f"  [{', '.join(d.value for d in decisions)}]"
        )
    print(f"re-gated {len(traces)} trace(s) under config {cfg.config_hash()}; {changed} changed")
    if args.out:
        out_path = Path(args.out)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        out_path.write_text("\n".join(json.dumps(l, sort_keys=True) for l in out_lines) + "\n")
    return 0


def _cmd_validate_config(args: argparse.Namespace) -> int:
    cfg = _load_cfg(args)
    print(f"config ok (hash {cfg.config_hash()})")
    if args.write:
        save_config(cfg, args.write)
        print(f"wrote {args.write}")
    return 0


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="TOML config file (env CLAIMGATE_CONFIG)")
    p.add_argument("--max-rounds", type=int, dest="max_rounds")
    p.add_argument(
        "--gate",
        action="append",
        metavar="TYPE=VALUE",
        help="per-type gate override, e.g. existence=0.82,count=0.85",
    )
    p.add_argument(
        "--ablate",
        action="append",
        metavar="SWITCH=on|off",
        help="ablation switch, e.g. use_grounding=off",
    )
    p.add_argument("--ground-conf", type=float, dest="ground_conf")


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help="output directory (env CLAIMGATE_OUT)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="claimgate",
        description="Evidence-gated answer verification over images.",
        epilog=(
            "Environment overrides: CLAIMGATE_CONFIG, CLAIMGATE_OUT,"
            " CLAIMGATE_SEED, CLAIMGATE_WORKERS."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the pipeline against live endpoints")
    p_run.add_argument("--image")
    p_run.add_argument("--question")
    p_run.add_argument("--expected-type", choices=[c.value for c in ClaimType])
    p_run.add_argument("--dataset")
    p_run.add_argument(
        "--format", choices=["pope", "pope-community", "mme"], default="pope"
    )
    p_run.add_argument("--limit", type=int)
    p_run.add_argument(
        "--endpoint",
        action="append",
        metavar="ROLE=URL",
        help="backend binding; roles: chat, initializer, judge, refiner,"
        " color_observer, grounder",
    )
    p_run.add_argument("--model", default="default")
    p_run.add_argument("--record", action="store_true", help="record responses to store.json")
    _add_config_flags(p_run)
    _add_run_flags(p_run)
    p_run.set_defaults(func=_cmd_run)

    p_sim = sub.add_parser("simulate", help="synthetic-scene batch with oracle backends")
    p_sim.add_argument("--scenes", type=int, default=50)
    p_sim.add_argument("--difficulty", choices=["normal", "adversarial"], default="normal")
    p_sim.add_argument("--questions", choices=["cycle", "all"], default="cycle")
    p_sim.add_argument(
        "--judge-mode",
        choices=["truthful", "always_supported", "always_insufficient"],
        default="truthful",
    )
    p_sim.add_argument("--judge-noise", type=float, default=0.0, help="verdict flip probability")
    p_sim.add_argument("--grounder-miss", type=float, default=0.0)
    p_sim.add_argument("--grounder-hallucinate", type=float, default=0.0)
    p_sim.add_argument("--grounder-jitter", type=float, default=0.0)
    p_sim.add_argument("--init-wrong-rate", type=float, default=0.0)
    _add_config_flags(p_sim)
    _add_run_flags(p_sim)
    p_sim.set_defaults(func=_cmd_simulate)

    p_eval = sub.add_parser("eval", help="score traces against a dataset")
    eval_sub = p_eval.add_subparsers(dest="benchmark", required=True)
    p_pope = eval_sub.add_parser("pope")
    p_pope.add_argument("--dataset", required=True)
    p_pope.add_argument("--traces", required=True)
    p_pope.add_argument("--baseline", help="baseline trace file for deltas")
    p_pope.set_defaults(func=_cmd_eval_pope)
    p_mme = eval_sub.add_parser("mme")
    p_mme.add_argument("--dataset", required=True)
    p_mme.add_argument("--traces", required=True)
    p_mme.set_defaults(func=_cmd_eval_mme)

    p_trans = sub.add_parser("transitions", help="answer-transition partition of a trace file")
    p_trans.add_argument("--traces", required=True)
    p_trans.set_defaults(func=_cmd_transitions)

    p_eff = sub.add_parser("efficiency", help="per-round latency and checked-case counts")
    p_eff.add_argument("--traces", required=True)
    p_eff.set_defaults(func=_cmd_efficiency)

    p_render = sub.add_parser("render-trace", help="human-readable trace dump")
    p_render.add_argument("--traces", required=True)
    p_render.add_argument("--sample", help="only this sample_id")
    p_render.set_defaults(func=_cmd_render_trace)

    p_replay = sub.add_parser(
        "replay", help="re-run consolidation and gating over recorded traces"
    )
    p_replay.add_argument("--traces", required=True)
    p_replay.add_argument("--out", help="write re-gated results as JSONL")
    _add_config_flags(p_replay)
    p_replay.set_defaults(func=_cmd_replay)

    p_vc = sub.add_parser("validate-config", help="check a config file and print its hash")
    p_vc.add_argument("--write", help="write the effective config as TOML")
    _add_config_flags(p_vc)
    p_vc.set_defaults(func=_cmd_validate_config)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except bench.EmptyInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
