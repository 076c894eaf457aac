"""Benchmark command line.

    bench micro --threads 8 --txs 5000 --key-range 50000 \
        --policy nest-all --seed 7 --reps 10 --csv out/micro.csv --plot
    bench nids --producers 1 --consumers 8 --fragments 1 --packets 2000 \
        --policy nest-log --seed 7 --csv out/nids.csv
    bench report --csv out/micro.csv

Exit status: 0 on success, 1 on audit or I/O failure, 2 on bad usage.
"""

from __future__ import annotations

import argparse
import sys

from .figures import render_figures, render_from_csv, stats_rows
from .micro import MICRO_POLICIES, AuditError, MicroConfig, run_micro
from .nids import NIDS_POLICIES, NidsConfig, run_nids
from .stats import CSV_HEADER, emit_csv


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Microbenchmark and intrusion-detection pipeline "
                    "benchmark for the txnest transactional library.")
    sub = parser.add_subparsers(dest="command", required=True)

    micro = sub.add_parser("micro", help="random map+queue transactions")
    micro.add_argument("--threads", type=int, required=True)
    micro.add_argument("--txs", type=int, default=50_000,
                       help="transactions per thread (default 50000)")
    micro.add_argument("--map-ops", type=int, default=10)
    micro.add_argument("--queue-ops", type=int, default=2)
    micro.add_argument("--key-range", type=int, default=50_000, choices=[50, 50_000],
                       help="map key range: 50 (high contention) or 50000 (low)")
    micro.add_argument("--policy", choices=MICRO_POLICIES, default="flat")
    micro.add_argument("--seed", type=int, default=1)
    micro.add_argument("--reps", type=int, default=10)
    micro.add_argument("--csv", default=None, help="output CSV path")
    micro.add_argument("--record-history", action="store_true",
                       help="record committed operations and check structure laws")
    micro.add_argument("--plot", action="store_true",
                       help="render figures next to the CSV")

    nids = sub.add_parser("nids", help="packet-inspection pipeline")
    nids.add_argument("--producers", type=int, default=1)
    nids.add_argument("--consumers", type=int, default=4)
    nids.add_argument("--fragments", type=int, default=1, choices=[1, 8],
                      help="fragments per packet")
    nids.add_argument("--packets", type=int, default=1000)
    nids.add_argument("--policy", choices=NIDS_POLICIES, default="flat")
    nids.add_argument("--match-work", type=int, default=1000,
                      help="signature-matching iterations per packet")
    nids.add_argument("--logs", type=int, default=None,
                      help="verdict log count (default: consumers // 2)")
    nids.add_argument("--pool-size", type=int, default=64)
    nids.add_argument("--seed", type=int, default=1)
    nids.add_argument("--csv", default=None)
    nids.add_argument("--record-history", action="store_true")
    nids.add_argument("--plot", action="store_true")

    report = sub.add_parser("report", help="render figures from an emitted CSV")
    report.add_argument("--csv", required=True)
    report.add_argument("--out-dir", default=None)
    return parser


def _finish(stats, args) -> int:
    rows = stats_rows(stats)
    if args.csv:
        emit_csv(stats, args.csv)
        print("wrote %s" % args.csv)
        if args.plot:
            for path in render_figures(rows, args.csv.rsplit(".", 1)[0]):
                print("wrote %s" % path)
    else:
        if args.plot:
            print("error: --plot requires --csv", file=sys.stderr)
            return 2
        print(CSV_HEADER)
        for s in stats:
            print(s.csv_row())
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "micro":
            config = MicroConfig(
                threads=args.threads,
                tx_per_thread=args.txs,
                map_ops_per_tx=args.map_ops,
                queue_ops_per_tx=args.queue_ops,
                key_range=args.key_range,
                policy=args.policy,
                seed=args.seed,
                repetitions=args.reps,
                record_history=args.record_history,
            )
            return _finish(run_micro(config), args)
        if args.command == "nids":
            config = NidsConfig(
                producers=args.producers,
                consumers=args.consumers,
                fragments_per_packet=args.fragments,
                packets=args.packets,
                policy=args.policy,
                match_work=args.match_work,
                log_count=args.logs,
                pool_size=args.pool_size,
                seed=args.seed,
                record_history=args.record_history,
            )
            return _finish([run_nids(config)], args)
        # report
        for path in render_from_csv(args.csv, args.out_dir):
            print("wrote %s" % path)
        return 0
    except ValueError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except AuditError as exc:
        print("audit failure: %s" % exc, file=sys.stderr)
        return 1
    except OSError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 1


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
