"""``bench`` command line: construct, mixed and gen-log."""

from __future__ import annotations

import argparse
import logging
import sys

from ..engine import Engine, EngineConfig
from .logio import MODES, generate_log, load_edge_list, write_log
from .report import emit_report
from .runner import run_construction, run_mixed


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, help="edge list or update log")
    p.add_argument("--mode", choices=MODES, default="shuffled")
    p.add_argument("--threads", type=int, default=8)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report", choices=("json", "human"), default="human")
    p.add_argument("--backend", choices=("auto", "cython", "python"), default="auto")
    p.add_argument("--no-verify", action="store_true", help="skip the final oracle comparison")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bench", description="transactional graph store benchmarks")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    c = sub.add_parser("construct", help="build a graph from an edge list")
    _common(c)

    m = sub.add_parser("mixed", help="stream updates while running analytics")
    _common(m)
    m.add_argument("--kernel", choices=("pr", "sssp"), default="pr")
    m.add_argument("--hotspot", action="store_true", help="group streamed updates by source")
    m.add_argument("--preload-fraction", type=float, default=0.8)

    g = sub.add_parser("gen-log", help="write a synthetic hub-skewed update log")
    g.add_argument("--vertices", type=int, required=True)
    g.add_argument("--edges", type=int, required=True, help="number of records")
    g.add_argument("--zipf", type=float, default=1.2)
    g.add_argument("--delete-ratio", type=float, default=0.1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    if args.command == "gen-log":
        write_log(args.out, *generate_log(args.vertices, args.edges, args.zipf, args.delete_ratio, args.seed))
        return 0
    if args.threads < 1:
        print("bench: --threads must be >= 1", file=sys.stderr)
        return 2
    try:
        log = load_edge_list(args.input, args.mode, args.seed)
    except (OSError, ValueError) as exc:
        print(f"bench: {exc}", file=sys.stderr)
        return 2
    config = EngineConfig.from_env(backend=args.backend, vertex_capacity=log.vertex_count + 2)
    with Engine(config) as engine:
        workload = f"{args.command}-{args.mode}"
        if args.command == "construct":
            report = run_construction(engine, log, args.threads, workload, check=not args.no_verify)
        else:
            if args.hotspot:
                workload += "-hotspot"
            report = run_mixed(
                engine, log, args.threads, args.kernel, args.hotspot, args.preload_fraction,
                f"{workload}-{args.kernel}", check=not args.no_verify,
            )
    print(emit_report(report, args.report))
    if report.verify_failures:
        print(f"bench: verification failed for {report.verify_failures} vertices", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
