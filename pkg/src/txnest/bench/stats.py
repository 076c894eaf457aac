"""Run statistics and CSV emission shared by both benchmarks."""

from __future__ import annotations

from dataclasses import dataclass

CSV_HEADER = ("bench,policy,threads,reps,throughput,abort_rate,"
              "parent_aborts,child_aborts,child_retries,wall_ms")


@dataclass
class RunStats:
    """Aggregated counters for one benchmark run (one repetition).

    ``committed + parent_aborts`` equals the total number of transaction
    attempts; the abort rate is parent aborts over attempts.
    """

    bench: str
    policy: str
    threads: int
    rep: int
    committed: int
    parent_aborts: int
    child_aborts: int
    child_retries: int
    wall_seconds: float
    empty_deqs: int = 0  # transparency counter, not part of the CSV schema

    @property
    def attempts(self) -> int:
        return self.committed + self.parent_aborts

    @property
    def abort_rate(self) -> float:
        total = self.attempts
        return self.parent_aborts / total if total else 0.0

    @property
    def throughput(self) -> float:
        return self.committed / self.wall_seconds if self.wall_seconds > 0 else 0.0

    @property
    def wall_ms(self) -> float:
        return self.wall_seconds * 1000.0

    def csv_row(self) -> str:
        return "%s,%s,%d,%d,%.2f,%.6f,%d,%d,%d,%.3f" % (
            self.bench, self.policy, self.threads, self.rep,
            self.throughput, self.abort_rate,
            self.parent_aborts, self.child_aborts, self.child_retries,
            self.wall_ms)


def emit_csv(stats: list[RunStats], path) -> None:
    """Write the header plus one row per run, deterministically formatted."""
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(CSV_HEADER + "\n")
            for s in stats:
                fh.write(s.csv_row() + "\n")
    except OSError as exc:
        raise OSError("cannot write CSV to %r: %s" % (str(path), exc)) from exc


def read_csv(path) -> list[dict]:
    import csv

    with open(path, newline="", encoding="utf-8") as fh:
        return [dict(row) for row in csv.DictReader(fh)]
