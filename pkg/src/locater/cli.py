"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 data error.  Answers are printed
as single-line records so they can be consumed by scripts.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import engine, evaluate as evaluate_mod, report, simulate as simulate_mod
from .cache import GlobalAffinityGraph
from .coarse import resolve_thresholds
from .config import load_config
from .errors import DataError, LocaterError
from .model import OUTSIDE, validate_space_model
from .store import ingest, load_store, _parse_timestamp

CACHE_FILE = "cache.jsonl"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(1)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="locater", description="Semantic indoor location from WiFi logs")
    p.add_argument("--config", help="config file (or LOCATER_CONFIG env var)")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    sp = sub.add_parser("ingest", help="parse logs and build a store directory")
    sp.add_argument("--events", required=True)
    sp.add_argument("--space", required=True)
    sp.add_argument("--out", required=True)
    sp.add_argument("--format", default="csv", choices=["csv", "jsonl"])
    sp.add_argument("--timezone", default="UTC")

    sp = sub.add_parser("estimate-params", help="print per-device validity periods and thresholds")
    sp.add_argument("--store", required=True)

    sp = sub.add_parser("query", help="locate a device at a time")
    sp.add_argument("--store", required=True)
    sp.add_argument("--device", required=True)
    sp.add_argument("--time", required=True)
    sp.add_argument("--granularity", default="fine", choices=["coarse", "fine"])
    sp.add_argument("--write-back", action="store_true")

    sp = sub.add_parser("evaluate", help="run systems against ground truth")
    sp.add_argument("--store", required=True)
    sp.add_argument("--truth", required=True)
    sp.add_argument("--queries", type=int, default=200)
    sp.add_argument("--systems", default="baseline1,baseline2,I-LOCATER,D-LOCATER")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--out", help="report directory (default STORE/report)")

    sp = sub.add_parser("simulate", help="generate a scenario into a store directory")
    sp.add_argument("--scenario", required=True, help="bundled name or config path")
    sp.add_argument("--out", required=True)

    sp = sub.add_parser("cache-stats", help="print affinity-cache statistics")
    sp.add_argument("--store", required=True)

    sp = sub.add_parser("clean-all", help="naively clean every gap in the store")
    sp.add_argument("--store", required=True)
    sp.add_argument("--granularity", default="coarse", choices=["coarse", "fine"])

    return p


def _cache_graph(store_dir: str, config):
    if not config.cache_enabled:
        return None
    return GlobalAffinityGraph(Path(store_dir) / CACHE_FILE)


def _cmd_ingest(args, config) -> int:
    store, rejects = ingest(
        args.events, args.space, args.out, fmt=args.format, tz=args.timezone
    )
    for violation in validate_space_model(store.space):
        print(f"space-model: {violation}", file=sys.stderr)
    print(
        f"ingested events={len(store.events)} devices={len(store.devices())} "
        f"tuples={len(store.table)} rejects={len(rejects)}"
    )
    return 0


def _cmd_estimate_params(args, config) -> int:
    store = load_store(args.store)
    th = resolve_thresholds(store, config)
    print(f"tau_low_s={th.tau_low:.0f} tau_high_s={th.tau_high:.0f}")
    for dev in store.devices():
        print(f"delta {dev} {store.deltas[dev]}")
    return 0


def _format_answer(answer) -> str:
    p = 1.0
    if answer.distribution:
        p = answer.distribution.get(answer.value, 1.0)
    line = f"{answer.level} {answer.value} p={p:.4f} neighbors={answer.processed_neighbors}"
    if answer.distribution:
        dist = ",".join(
            f"{room}:{prob:.4f}"
            for room, prob in sorted(answer.distribution.items(), key=lambda kv: (-kv[1], kv[0]))
        )
        line += f" dist={dist}"
    return line


def _cmd_query(args, config) -> int:
    store = load_store(args.store)
    graph = _cache_graph(args.store, config)
    t = _parse_timestamp(args.time)
    answer = engine.answer_query(
        store,
        graph,
        args.device.lower(),
        t,
        granularity=args.granularity,
        config=config,
        write_back=args.write_back,
    )
    print(_format_answer(answer))
    return 0


def _cmd_evaluate(args, config) -> int:
    store = load_store(args.store)
    truth = simulate_mod.read_truth(args.truth)
    systems = [s.strip() for s in args.systems.split(",") if s.strip()]
    queries = evaluate_mod.generate_queries(truth, args.queries, args.seed)
    graph = _cache_graph(args.store, config)
    rows = evaluate_mod.compare(store, truth, queries, systems, config, cache_graph=graph)
    out = Path(args.out) if args.out else Path(args.store) / "report"
    paths = report.write_report(rows, out)
    sys.stdout.write(report.comparison_tsv(rows))
    for path in paths:
        print(f"wrote {path}", file=sys.stderr)
    return 0


def _cmd_simulate(args, config) -> int:
    path = Path(args.scenario)
    if path.exists():
        scenario = simulate_mod.load_scenario(path)
    else:
        scenario = simulate_mod.bundled_scenario(args.scenario)
    result = simulate_mod.generate(scenario)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    simulate_mod.write_events_csv(result.events, out / "events.csv")
    simulate_mod.write_space_json(result.space, out / "space.json")
    simulate_mod.write_truth(result.truth, out / "truth.csv")
    ingest(out / "events.csv", out / "space.json", out)
    print(
        f"simulated scenario={scenario.name} events={len(result.events)} "
        f"truth_records={len(result.truth)} devices={len(result.space.devices)}"
    )
    return 0


def _cmd_cache_stats(args, config) -> int:
    path = Path(args.store) / CACHE_FILE
    graph = GlobalAffinityGraph(path if path.exists() else None)
    print(graph.stats())
    return 0


def _cmd_clean_all(args, config) -> int:
    store = load_store(args.store)
    graph = _cache_graph(args.store, config)
    n = engine.clean_all(store, config, cache_graph=graph, granularity=args.granularity)
    print(f"cleaned {n} gaps")
    return 0


_COMMANDS = {
    "ingest": _cmd_ingest,
    "estimate-params": _cmd_estimate_params,
    "query": _cmd_query,
    "evaluate": _cmd_evaluate,
    "simulate": _cmd_simulate,
    "cache-stats": _cmd_cache_stats,
    "clean-all": _cmd_clean_all,
}


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        return _COMMANDS[args.cmd](args, config)
    except LocaterError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
