"""Command-line entry point.

    har-guard gen     --config C --out DIR      synthetic windows -> windows.csv
    har-guard attack  --config C --out DIR      attacked corpus   -> corpus.jsonl
    har-guard defend  --config C --out DIR --corpus corpus.jsonl
    har-guard eval    --config C --out DIR      full campaign     -> report.{csv,json,md}
    har-guard report  --records report.json --out DIR

Exit codes: 0 success, 1 runtime error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from .agent import STAGES, Defender, bootstrap_hub
from .attacks import AttackSpec, attack_pair, default_payload
from .backends import make_backend
from .errors import HarGuardError
from .evaluation import CampaignConfig, compute_metrics, emit_report, load_records, run_campaign
from .imu import ImuWindow, export_csv, synth_window
from .memory import MemoryHub
from .prompts import Origin, Prompt, prompt_for_window
from .seeding import derive_seed

COMMANDS = ("gen", "attack", "defend", "eval", "report")


class UsageError(Exception):
    pass


def _common(p: argparse.ArgumentParser, config_required: bool = True) -> None:
    p.add_argument("--config", required=config_required, help="campaign config JSON")
    p.add_argument("--out", required=True, help="output directory (nothing is written elsewhere)")
    p.add_argument("--seed", type=int, help="override the config seed (unsigned 64-bit)")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override a config field; VALUE is parsed as JSON when possible")


def _backend_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--backend", choices=("mock", "http", "replay"), default="mock",
                   help="LLM backend; http reads HAR_GUARD_ENDPOINT and the token env var")
    p.add_argument("--auth-env", default="HAR_GUARD_API_KEY", help="env var holding the bearer token")
    p.add_argument("--timeout", type=float, default=30.0, help="http timeout in seconds")
    p.add_argument("--replay-log", help="JSONL replay log (written by http, read by replay)")
    p.add_argument("--jobs", type=int, default=1, help="worker threads per campaign cell (default 1)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="har-guard", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}")
    p = sub.add_parser("gen", help="write synthetic IMU windows to CSV")
    _common(p)
    p = sub.add_parser("attack", help="write attacked (window, prompt) pairs as JSONL")
    _common(p)
    p = sub.add_parser("defend", help="run the defense loop over an attacked corpus")
    _common(p)
    _backend_flags(p)
    p.add_argument("--corpus", required=True, help="corpus.jsonl produced by `attack`")
    p = sub.add_parser("eval", help="run the full campaign and write reports")
    _common(p)
    _backend_flags(p)
    p = sub.add_parser("report", help="re-render reports from stored records")
    p.add_argument("--records", required=True, help="report.json written by `eval`")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--format", action="append", choices=("csv", "json", "md"),
                   help="formats to write (repeatable; default all)")
    return parser


def _parse_value(v: str):
    try:
        return json.loads(v)
    except ValueError:
        return v


def load_config(args) -> CampaignConfig:
    path = Path(args.config)
    if not path.is_file():
        raise UsageError(f"config file {path} does not exist")
    data = json.loads(path.read_text(encoding="utf-8"))
    for item in args.overrides:
        key, sep, value = item.partition("=")
        if not sep:
            raise UsageError(f"override {item!r} is not KEY=VALUE")
        data[key] = _parse_value(value)
    if args.seed is not None:
        if not 0 <= args.seed < 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        data["seed"] = args.seed
    return CampaignConfig.from_dict(data)


def _backend(args):
    return make_backend(args.backend, auth_env=args.auth_env, timeout=args.timeout, replay_log=args.replay_log)


def _window_to_dict(w: ImuWindow) -> dict:
    return {"t": w.t.tolist(), "accel": w.accel.tolist(), "gyro": w.gyro.tolist(), "rate_hz": w.rate_hz,
            "label": w.label, "subject_id": w.subject_id, "seed": w.seed}


def _window_from_dict(d: dict) -> ImuWindow:
    return ImuWindow(np.array(d["t"]), np.array(d["accel"]), np.array(d["gyro"]), float(d["rate_hz"]),
                     d["label"], d["subject_id"], int(d["seed"]))


def _write_text(path: Path, text: str) -> None:
    tmp = path.with_name("." + path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    tmp.replace(path)


def cmd_gen(args, out: Path) -> None:
    cfg = load_config(args)
    windows = []
    for i in range(cfg.trials_per_cell * len(cfg.labels)):
        label = cfg.labels[i % len(cfg.labels)]
        windows.append(synth_window(label, cfg.rate_hz, cfg.duration, derive_seed(cfg.seed, "gen", i)))
    export_csv(windows, out / "windows.csv")
    print(f"gen: wrote {len(windows)} windows to {out / 'windows.csv'}")


def cmd_attack(args, out: Path) -> None:
    cfg = load_config(args)
    lines = []
    for style in cfg.styles:
        for spec in cfg.attacks:
            for trial in range(cfg.trials_per_cell):
                label = cfg.labels[trial % len(cfg.labels)]
                w = synth_window(label, cfg.rate_hz, cfg.duration,
                                 derive_seed(cfg.seed, "window", style.value, spec.id.value, trial))
                p = prompt_for_window(w, style, cfg.labels)
                aseed = derive_seed(cfg.seed, "attack", style.value, spec.id.value, spec.seed, trial)
                s = AttackSpec(spec.id, spec.params, aseed, spec.payload or default_payload(label, cfg.labels, aseed))
                w2, p2 = attack_pair(s, w, p)
                lines.append(json.dumps({
                    "style": style.value, "attack": s.to_dict(), "trial": trial, "true_label": label,
                    "was_attacked": w2 != w or any(seg.origin is Origin.ATTACK for seg in p2.segments),
                    "prompt": json.loads(p2.to_json()), "benign_prompt": json.loads(p.to_json()),
                    "window": _window_to_dict(w2),
                }, sort_keys=True))
    _write_text(out / "corpus.jsonl", "\n".join(lines) + "\n")
    print(f"attack: wrote {len(lines)} attacked pairs to {out / 'corpus.jsonl'}")


def cmd_defend(args, out: Path) -> None:
    cfg = load_config(args)
    corpus = Path(args.corpus)
    if not corpus.is_file():
        raise UsageError(f"corpus file {corpus} does not exist")
    backend = _backend(args)
    hub = MemoryHub(out / "hub.jsonl")
    rows = [json.loads(line) for line in corpus.read_text(encoding="utf-8").splitlines() if line.strip()]
    styles = sorted({r["style"] for r in rows})
    for style in styles:
        if not hub.prototypes(style):
            bootstrap_hub(hub, style, backend, cfg.bootstrap_n, derive_seed(cfg.seed, "bootstrap"),
                          cfg.labels, cfg.rate_hz, cfg.duration)
    defender = Defender(hub, backend, k=cfg.k)
    results, totals = [], dict.fromkeys(STAGES, 0.0)
    for r in rows:
        w, p = _window_from_dict(r["window"]), Prompt.from_json(r["prompt"])
        o = defender.defend(w, p)
        hub.store(o.entry(p))
        for k, v in o.timings.items():
            totals[k] += v
        results.append(json.dumps({"style": r["style"], "attack": r["attack"]["id"], "trial": r["trial"],
                                   "true_label": r["true_label"], "defended_pred": o.prediction,
                                   "detected": o.detected, "plan": o.plan.to_dict(),
                                   "report": o.report.to_dict()}, sort_keys=True))
    _write_text(out / "defended.jsonl", "\n".join(results) + "\n")
    n = max(len(rows), 1)
    _write_text(out / "timing.json", json.dumps({k: 1000 * v / n for k, v in totals.items()}, indent=1) + "\n")
    print(f"defend: {len(rows)} trials, results in {out / 'defended.jsonl'}")


def cmd_eval(args, out: Path) -> None:
    cfg = load_config(args)
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    backend = _backend(args)
    t0 = time.perf_counter()
    records = run_campaign(cfg, backend, jobs=args.jobs)
    metrics = compute_metrics(records, da_mode=cfg.da_mode, sc_threshold=cfg.sc_threshold)
    paths = emit_report(records, metrics, out)
    o = metrics["overall"]
    print(f"eval: {len(records)} trials in {time.perf_counter() - t0:.1f}s; "
          f"ASR {o['ASR_undefended']} -> {o['ASR_defended']}, DA {o['DA']}")
    for p in paths:
        print(f"  {p}")


def cmd_report(args, out: Path) -> None:
    path = Path(args.records)
    if not path.is_file():
        raise UsageError(f"records file {path} does not exist")
    data = json.loads(path.read_text(encoding="utf-8"))
    records = load_records(path)
    mode = data.get("metrics", {}).get("da_mode", "mixed")
    metrics = compute_metrics(records, da_mode=mode)
    for p in emit_report(records, metrics, out, tuple(args.format or ("csv", "json", "md"))):
        print(f"report: wrote {p}")


HANDLERS = {"gen": cmd_gen, "attack": cmd_attack, "defend": cmd_defend, "eval": cmd_eval, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)  # exits 2 on usage errors
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        HANDLERS[args.command](args, out)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"har-guard {args.command}: usage error: {exc}", file=sys.stderr)
        return 2
    except (HarGuardError, OSError, ValueError, KeyError) as exc:
        print(f"har-guard {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
