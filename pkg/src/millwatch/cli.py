"""Command line entry point.

Compute subcommands (run, replay, bench, evaluate, scenario) execute in-process.
``serve`` runs a pipeline behind the HTTP app, and ``status``/``alerts`` are
thin clients of a serving instance.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import threading
from pathlib import Path

from .core import ConfigError, InsufficientSamples, MillwatchError, ValidationError
from .simsource import ReplayError

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("millwatch")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage problems are validation errors (exit 1), not argparse's default 2
    def error(self, message: str) -> None:
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: {message}")


def _emit(doc, path=None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _write_truth(result, cfg) -> Path | None:
    from .alertstore import write_truth

    if result.out_dir is None or not result.scenarios:
        return None
    path = result.out_dir / "truth.ndjson"
    write_truth(path, result.truth(cfg))
    return path


def cmd_run(args) -> int:
    from .config import load_config
    from .runner import run

    cfg = load_config(args.config)
    if args.clock:
        cfg = cfg.model_copy(update={"clock": args.clock})
    result = run(cfg, out_dir=args.out)
    doc = result.report.to_dict()
    truth = _write_truth(result, cfg)
    if truth is not None:
        doc["truth_file"] = str(truth)
        doc["evaluation"] = result.evaluate(cfg).to_dict()
    if result.out_dir is not None:
        doc["out_dir"] = str(result.out_dir)
    _emit(doc, args.report)
    return EXIT_RUNTIME if result.report.failed else EXIT_OK


def cmd_replay(args) -> int:
    from .alertstore import evaluate, read_truth
    from .config import parse_config
    from .runner import run

    doc = {
        "cameras": [{"camera_id": args.camera, "source": f"replay:{Path(args.input).resolve()}"}],
        "fusion": {"signals": args.signals},
        "seed": args.seed,
    }
    if args.profile is not None:
        doc["cameras"][0]["profile_mm"] = args.profile
    cfg = parse_config(doc, base_dir=Path.cwd())
    result = run(cfg, out_dir=args.out)
    out = result.report.to_dict()
    out["evaluation"] = None
    if args.truth:
        report = evaluate(result.engine.all_alerts(), read_truth(args.truth), cfg.match_window_s)
        out["evaluation"] = report.to_dict()
    _emit(out, args.report)
    return EXIT_RUNTIME if result.report.failed else EXIT_OK


def cmd_bench(args) -> int:
    from .bench import measure
    from .detect import OracleNoise
    from .simsource import load_scenario

    sc = load_scenario(args.scenario)
    report = measure(
        sc,
        args.frames,
        latency_model_ms=args.latency_ms,
        acquire_capacity=args.acquire_capacity,
        acquire_policy=args.acquire_policy,
        detector=args.detector,
        null_analytics=args.null_analytics,
        noise=OracleNoise(args.noise_px, args.miss_rate, 0.0, sc.seed),
    )
    _emit(report.to_dict(), args.report)
    return EXIT_RUNTIME if report.failed else EXIT_OK


def cmd_evaluate(args) -> int:
    from .alertstore import evaluate, read_alerts, read_truth

    try:
        alerts = read_alerts(args.alerts)
        truth = read_truth(args.truth)
    except (OSError, KeyError, ValueError) as exc:
        raise ConfigError(f"cannot read inputs: {exc}") from exc
    _emit(evaluate(alerts, truth, args.window).to_dict(), args.report)
    return EXIT_OK


def cmd_scenario(args) -> int:
    from .simsource import cut_scenario, mixed_scenario, random_scenario

    if args.kind == "mixed":
        sc = mixed_scenario(args.seed, n_events=args.events)
    elif args.kind == "random":
        sc = random_scenario(args.seed, duration_s=args.duration)
    else:
        sc = cut_scenario(args.seed)
    sc.save(args.out)
    print(json.dumps({"path": args.out, "duration_s": sc.duration_s, "events": len(sc.events)}))
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    from .config import load_config
    from .pipeline import LiveState
    from .runner import build_pipeline
    from .service import create_app

    cfg = load_config(args.config)
    live = LiveState()
    pipe, _ = build_pipeline(cfg, out_dir=args.out, live=live)
    worker = threading.Thread(target=pipe.run, name="pipeline", daemon=True)
    bind = args.bind or cfg.http.bind
    host, _, port = bind.rpartition(":")
    worker.start()
    uvicorn.run(create_app(live), host=host, port=int(port), log_level="warning")
    return EXIT_RUNTIME if live.report is not None and live.report.failed else EXIT_OK


def _client_get(url: str, path: str, **params):
    import httpx

    try:
        resp = httpx.get(url.rstrip("/") + path, params=params or None, timeout=10.0)
    except httpx.HTTPError as exc:
        raise MillwatchError(f"cannot reach {url}: {exc}") from exc
    return resp


def cmd_status(args) -> int:
    health = _client_get(args.url, "/health")
    metrics = _client_get(args.url, "/metrics")
    _emit({"health": health.json(), "metrics": metrics.json()})
    return EXIT_OK if health.status_code == 200 else EXIT_RUNTIME


def cmd_alerts(args) -> int:
    resp = _client_get(args.url, "/alerts", limit=args.limit)
    sys.stdout.write(resp.text)
    return EXIT_OK if resp.status_code == 200 else EXIT_RUNTIME


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="millwatch", description="Rolling-mill anomaly detection pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run the pipeline described by a config file")
    r.add_argument("--config", help="config path (default: $MILLWATCH_CONFIG)")
    r.add_argument("--out", help="output directory (overrides sinks.out_dir)")
    r.add_argument("--report", help="also write the JSON report here")
    r.add_argument("--clock", choices=["simulated", "wall"])
    r.set_defaults(fn=cmd_run)

    rp = sub.add_parser("replay", help="re-score a recorded NDJSON stream")
    rp.add_argument("--input", required=True)
    rp.add_argument("--truth", help="truth NDJSON to score against")
    rp.add_argument("--camera", default="replay")
    rp.add_argument("--profile", type=int)
    rp.add_argument("--signals", default="none", help="'none', 'file:<ndjson>' or 'tcp:<host>:<port>'")
    rp.add_argument("--seed", type=int, default=0)
    rp.add_argument("--out", default="out")
    rp.add_argument("--report")
    rp.set_defaults(fn=cmd_replay)

    b = sub.add_parser("bench", help="wall-clock latency and throughput measurement")
    b.add_argument("--scenario", required=True)
    b.add_argument("--frames", type=int, required=True)
    b.add_argument("--latency-ms", type=float, default=0.0)
    b.add_argument("--acquire-capacity", type=int, default=128)
    b.add_argument("--acquire-policy", choices=["Block", "DropOldest"], default="DropOldest")
    b.add_argument("--detector", choices=["oracle", "null"], default="oracle")
    b.add_argument("--null-analytics", action="store_true")
    b.add_argument("--noise-px", type=float, default=0.0)
    b.add_argument("--miss-rate", type=float, default=0.0)
    b.add_argument("--report")
    b.set_defaults(fn=cmd_bench)

    e = sub.add_parser("evaluate", help="score an alert log against truth events")
    e.add_argument("--alerts", required=True)
    e.add_argument("--truth", required=True)
    e.add_argument("--window", type=float, default=3.0, help="match window in seconds")
    e.add_argument("--report")
    e.set_defaults(fn=cmd_evaluate)

    s = sub.add_parser("scenario", help="write a generated scenario file")
    s.add_argument("kind", choices=["mixed", "random", "cut"])
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--events", type=int, default=50)
    s.add_argument("--duration", type=float, default=40.0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_scenario)

    sv = sub.add_parser("serve", help="run the pipeline and serve its HTTP endpoints")
    sv.add_argument("--config")
    sv.add_argument("--bind", help="host:port (overrides http.bind)")
    sv.add_argument("--out")
    sv.set_defaults(fn=cmd_serve)

    st = sub.add_parser("status", help="query a serving instance")
    st.add_argument("--url", default="http://127.0.0.1:8080")
    st.set_defaults(fn=cmd_status)

    al = sub.add_parser("alerts", help="fetch recent alerts from a serving instance")
    al.add_argument("--url", default="http://127.0.0.1:8080")
    al.add_argument("--limit", type=int, default=50)
    al.set_defaults(fn=cmd_alerts)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.fn(args)
    except (ValidationError, ReplayError, InsufficientSamples, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (MillwatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
