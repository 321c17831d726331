"""Command-line entry point.

Subcommands: synth, train, evaluate, explain, serve, score, bench.
Exit codes are stable for scripting: 0 success, 2 config error, 3 data
error, 4 training error, 5 network error, 1 anything else.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from . import canlog, config, kernels, pipeline, stream
from .artifact import load_artifact, save_artifact
from .canlog import AttackKind
from .errors import (
    CanidsError,
    ConfigError,
    DataError,
    IoError,
    NetError,
    ParseError,
    SchemaError,
    TrainingError,
)

EXIT_CODES = (
    (ConfigError, 2),
    (SchemaError, 3),
    (ParseError, 3),
    (IoError, 3),
    (DataError, 3),
    (TrainingError, 4),
    (NetError, 5),
)


def _exit_code(exc):
    for cls, code in EXIT_CODES:
        if isinstance(exc, cls):
            return code
    return 1


def _write_json(path, results):
    # Timestamps live in a separate metadata block so the results payload
    # stays reproducible byte for byte.
    payload = {
        "meta": {"created": time.strftime("%Y-%m-%dT%H:%M:%S%z")},
        "results": results,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _load_run_config(args, default_profile=None):
    overrides = {
        "profile": getattr(args, "profile", None),
        "seed": getattr(args, "seed", None),
        "out_dir": getattr(args, "out", None),
    }
    if args.config:
        return config.load_config(args.config, overrides)
    profile = overrides["profile"] or default_profile or "synthetic"
    return config.config_from_dict({"profile": profile}, overrides)


def _install_data(args, cfg):
    if getattr(args, "data", None):
        attack = AttackKind(args.attack) if getattr(args, "attack", None) else AttackKind.NONE
        cfg.data = [config.DataEntry(path=p, attack=attack) for p in args.data]


def _frames_for(args, cfg):
    _install_data(args, cfg)
    return pipeline.load_frames(cfg)


def cmd_synth(args):
    cfg = _load_run_config(args)
    synth_cfg = cfg.synth or canlog.default_synth_config(seed=cfg.seed)
    frames = canlog.generate_synthetic(synth_cfg)
    schema = canlog.synthetic_schema(attack_column=args.attack_column)
    canlog.write_csv(frames, schema, args.out_csv)
    injected = sum(1 for f in frames if f.flag is canlog.Flag.INJECTED)
    print(f"wrote {len(frames)} frames ({injected} injected) to {args.out_csv}")
    return 0


def cmd_train(args):
    cfg = _load_run_config(args)
    _install_data(args, cfg)
    result = pipeline.train_pipeline(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifact_path = out / "artifact.json"
    save_artifact(result["artifact"], artifact_path)
    _write_json(out / "metrics.json", result["report"].to_json_dict())
    (out / "metrics.txt").write_text(result["report"].format_table())
    print(
        f"trained on {result['train_windows']} windows, "
        f"evaluated on {result['test_windows']}"
    )
    print(result["report"].format_table(), end="")
    print(f"artifact: {artifact_path}")
    return 0


def cmd_evaluate(args):
    art = load_artifact(args.artifact)
    cfg = _load_run_config(args, default_profile=art.profile)
    if cfg.profile != art.profile:
        raise ConfigError(
            f"artifact profile {art.profile!r} != data profile {cfg.profile!r}"
        )
    frames = _frames_for(args, cfg)
    report, timing, complexity = pipeline.evaluate_artifact(art, frames)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(
        out / "evaluation.json",
        {
            "metrics": report.to_json_dict(),
            "timing": timing.to_json_dict(),
            "complexity": complexity,
        },
    )
    print(report.format_table(), end="")
    print(
        f"inference: {timing.per_item_ms_median:.4f} ms/item "
        f"({timing.batch_ms_median:.4f} ms/batch of {timing.batch_size})"
    )
    from .metrics import format_complexity

    print(format_complexity(complexity), end="")
    return 0


def cmd_explain(args):
    art = load_artifact(args.artifact)
    cfg = _load_run_config(args, default_profile=art.profile)
    frames = _frames_for(args, cfg)
    settings = cfg.explain_settings()
    if args.permutations:
        settings.permutations = args.permutations
    if args.instances:
        settings.instances_per_class = args.instances
    report = pipeline.explain_artifact(art, frames, settings)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "shap.json", report.to_json_dict())
    (out / "shap.txt").write_text(report.format_text())
    print(report.format_text(), end="")
    return 0


def cmd_serve(args):
    cfg = _load_run_config(args)
    frames = _frames_for(args, cfg)
    server = stream.ReplayServer(
        frames, host=args.host, port=args.port, rate_mode=args.rate_mode, gap=args.gap
    )
    print(f"serving {len(frames)} frames on {server.host}:{server.port}")
    try:
        server.serve(max_clients=1 if args.once else None)
    finally:
        server.close()
    return 0


def cmd_score(args):
    if not args.artifact:
        raise ConfigError("score requires --artifact")
    art = load_artifact(args.artifact)
    scorer = art.make_scorer()
    verdicts, summary = stream.score_stream(
        (args.host, args.port), scorer, collect=False,
        on_verdict=(lambda v: print(
            f"window {v.window_index}: {v.class_name} "
            f"p={v.probability:.3f} {v.latency_us:.0f}us"
        )) if args.verbose else None,
    )
    if args.out_summary:
        _write_json(args.out_summary, summary.to_json_dict())
    print(
        f"{summary.windows} verdicts, {summary.deadline_violations} deadline "
        f"violations, p99 {summary.p99_us:.0f}us, "
        f"{summary.malformed_lines} malformed lines"
    )
    return 0


def cmd_bench(args):
    art = load_artifact(args.artifact)
    timing, complexity = pipeline.bench_artifact(
        art, batch_size=args.batch_size, repetitions=args.reps, warmup=args.warmup
    )
    from .metrics import format_complexity

    print(f"kernel backend: {kernels.BACKEND}")
    print(f"batch_size: {timing.batch_size}")
    print(
        f"inference time: {timing.per_item_ms_median:.4f} ms/item "
        f"(median over {timing.repetitions} reps)"
    )
    print(f"per-batch wall time: {timing.batch_ms_median:.4f} ms")
    print(format_complexity(complexity), end="")
    if args.out_summary:
        _write_json(
            args.out_summary,
            {"timing": timing.to_json_dict(), "complexity": complexity},
        )
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="canids",
        description="CAN-bus intrusion detection with latent-space distillation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, artifact=False):
        p.add_argument("--config", help="JSON run config")
        p.add_argument("--profile", choices=sorted(config.PROFILES))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        if artifact:
            p.add_argument("--artifact", help="path to a saved model artifact")

    p = sub.add_parser("synth", help="emit a synthetic CSV log")
    common(p)
    p.add_argument("out_csv")
    p.add_argument("--attack-column", action="store_true",
                   help="append a per-row attack-kind column")
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="run the full training pipeline")
    common(p)
    p.add_argument("--data", nargs="*", help="CSV log paths (default: synthetic)")
    p.add_argument("--attack", help="attack kind of the given files (hcrl style)")
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("evaluate", help="evaluate an artifact on a dataset")
    common(p, artifact=True)
    p.add_argument("--data", nargs="*")
    p.add_argument("--attack")
    p.set_defaults(fn=cmd_evaluate)

    p = sub.add_parser("explain", help="SHAP report for teacher and student")
    common(p, artifact=True)
    p.add_argument("--data", nargs="*")
    p.add_argument("--attack")
    p.add_argument("--permutations", type=int)
    p.add_argument("--instances", type=int)
    p.set_defaults(fn=cmd_explain)

    p = sub.add_parser("serve", help="replay frames over a socket")
    common(p)
    p.add_argument("--data", nargs="*")
    p.add_argument("--attack")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=0)
    p.add_argument("--rate-mode", choices=("max", "timestamped", "gap"), default="max")
    p.add_argument("--gap", type=float, default=0.001)
    p.add_argument("--once", action="store_true", help="serve one client then exit")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("score", help="score a replayed stream online")
    common(p, artifact=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, required=True)
    p.add_argument("--out-summary", help="write the summary JSON here")
    p.add_argument("--verbose", action="store_true")
    p.set_defaults(fn=cmd_score)

    p = sub.add_parser("bench", help="inference timing and complexity table")
    common(p, artifact=True)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--warmup", type=int, default=10)
    p.add_argument("--out-summary")
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except CanidsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
