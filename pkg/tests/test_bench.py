"""Benchmark harness: configs, determinism, CSV, CLI, audit."""

import math
import random

import pytest

from txnest.bench import (
    AuditError,
    CSV_HEADER,
    MicroConfig,
    NidsConfig,
    RunStats,
    emit_csv,
    read_csv,
    run_micro,
    run_nids,
)
from txnest.bench.cli import main
from txnest.bench.micro import _tx_script


def small_micro(**overrides):
    base = dict(threads=2, tx_per_thread=40, key_range=50, policy="flat",
                seed=3, repetitions=1, switch_interval=None)
    base.update(overrides)
    return MicroConfig(**base)


def small_nids(**overrides):
    base = dict(producers=1, consumers=2, fragments_per_packet=1, packets=30,
                policy="flat", match_work=50, pool_size=8, seed=3,
                switch_interval=None)
    base.update(overrides)
    return NidsConfig(**base)


class TestConfigs:
    def test_zero_transactions_rejected(self):
        with pytest.raises(ValueError):
            MicroConfig(threads=1, tx_per_thread=0).validate()

    def test_unknown_policy_rejected(self):
        with pytest.raises(ValueError):
            MicroConfig(threads=1, policy="nest-everything").validate()

    def test_nids_validation(self):
        with pytest.raises(ValueError):
            NidsConfig(packets=0).validate()
        with pytest.raises(ValueError):
            NidsConfig(policy="nested").validate()
        assert NidsConfig(consumers=8).effective_log_count == 4
        assert NidsConfig(consumers=8, log_count=3).effective_log_count == 3


class TestMicro:
    def test_accounting_invariants(self):
        stats, = run_micro(small_micro(threads=2, policy="nest-all"))
        assert stats.committed == 2 * 40
        assert stats.attempts == stats.committed + stats.parent_aborts
        assert 0.0 <= stats.abort_rate <= 1.0
        assert stats.wall_seconds > 0

    def test_single_thread_determinism(self):
        histories_a, histories_b = [], []
        cfg = small_micro(threads=1, tx_per_thread=60, policy="nest-queue",
                          record_history=True)
        stats_a, = run_micro(cfg, history_sink=histories_a)
        stats_b, = run_micro(cfg, history_sink=histories_b)
        assert stats_a.committed == stats_b.committed
        assert stats_a.empty_deqs == stats_b.empty_deqs
        ha, hb = histories_a[0], histories_b[0]
        ops_a = [(e.structure, e.op, e.args, e.result)
                 for r in ha.committed for e in r.events]
        ops_b = [(e.structure, e.op, e.args, e.result)
                 for r in hb.committed for e in r.events]
        assert ops_a == ops_b
        assert ha.finals == hb.finals

    def test_policies_yield_identical_commits_single_thread(self):
        committed = {}
        for policy in ("flat", "nest-all"):
            stats, = run_micro(small_micro(threads=1, policy=policy))
            committed[policy] = stats.committed
        assert committed["flat"] == committed["nest-all"]

    def test_operation_mix_uniform_within_3_sigma(self):
        cfg = MicroConfig(threads=1, map_ops_per_tx=10, queue_ops_per_tx=2,
                          key_range=50_000)
        rng = random.Random(99)
        counts = {"get": 0, "put": 0, "remove": 0, "enq": 0, "deq": 0}
        n_tx = 3000
        for _ in range(n_tx):
            map_ops, queue_ops = _tx_script(rng, cfg, 0)
            for op in map_ops:
                counts[op[0]] += 1
            for op in queue_ops:
                counts[op[0]] += 1
        n_map = n_tx * 10
        sigma_map = math.sqrt(n_map * (1 / 3) * (2 / 3))
        for op in ("get", "put", "remove"):
            assert abs(counts[op] - n_map / 3) <= 3 * sigma_map
        n_q = n_tx * 2
        sigma_q = math.sqrt(n_q * 0.25)
        for op in ("enq", "deq"):
            assert abs(counts[op] - n_q / 2) <= 3 * sigma_q


class TestNids:
    def test_single_fragment_run_audits_clean(self):
        stats = run_nids(small_nids())
        assert stats.committed == 30  # one consumer commit per fragment
        assert stats.attempts == stats.committed + stats.parent_aborts

    def test_multi_fragment_run_audits_clean(self):
        stats = run_nids(small_nids(
            producers=2, consumers=2, fragments_per_packet=8, packets=6,
            pool_size=16))
        assert stats.committed == 48

    def test_policies_audit_clean(self):
        for policy in ("nest-log", "nest-map", "nest-both"):
            stats = run_nids(small_nids(policy=policy, packets=20))
            assert stats.committed == 20

    def test_recorded_run_passes_laws(self):
        stats = run_nids(small_nids(packets=15, record_history=True))
        assert stats.committed == 15


class TestCsv:
    def test_one_run_two_lines(self, tmp_path):
        stats, = run_micro(small_micro(threads=1, tx_per_thread=5))
        path = tmp_path / "one.csv"
        emit_csv([stats], path)
        lines = path.read_text().splitlines()
        assert len(lines) == 2
        assert lines[0] == CSV_HEADER

    def test_thirty_runs_thirty_one_lines(self, tmp_path):
        stats = [
            RunStats("micro", policy, 8, rep, 100, 10, 5, 5, 0.5)
            for policy in ("flat", "nest-all", "nest-queue")
            for rep in range(1, 11)
        ]
        path = tmp_path / "many.csv"
        emit_csv(stats, path)
        assert len(path.read_text().splitlines()) == 31

    def test_deterministic_formatting(self, tmp_path):
        s = RunStats("micro", "flat", 8, 1, 1000, 250, 30, 20, 2.0)
        assert s.csv_row() == "micro,flat,8,1,500.00,0.200000,250,30,20,2000.000"

    def test_unwritable_path_names_path(self, tmp_path):
        stats = [RunStats("micro", "flat", 1, 1, 1, 0, 0, 0, 0.1)]
        bad = tmp_path / "missing-dir" / "out.csv"
        with pytest.raises(OSError) as err:
            emit_csv(stats, bad)
        assert "out.csv" in str(err.value)

    def test_round_trip(self, tmp_path):
        stats = [RunStats("micro", "flat", 8, 1, 1000, 250, 30, 20, 2.0)]
        path = tmp_path / "rt.csv"
        emit_csv(stats, path)
        rows = read_csv(path)
        assert rows[0]["policy"] == "flat"
        assert float(rows[0]["throughput"]) == 500.0


class TestCli:
    def test_micro_writes_csv_and_figures(self, tmp_path):
        csv_path = tmp_path / "micro.csv"
        code = main([
            "micro", "--threads", "1", "--txs", "20", "--key-range", "50",
            "--policy", "nest-queue", "--seed", "5", "--reps", "2",
            "--csv", str(csv_path), "--plot",
        ])
        assert code == 0
        assert csv_path.exists()
        assert len(csv_path.read_text().splitlines()) == 3
        assert (tmp_path / "micro_throughput.png").exists()
        assert (tmp_path / "micro_abort_rate.png").exists()

    def test_nids_stdout_mode(self, capsys):
        code = main([
            "nids", "--producers", "1", "--consumers", "2", "--fragments", "1",
            "--packets", "10", "--policy", "nest-log", "--match-work", "20",
            "--pool-size", "8", "--seed", "2",
        ])
        assert code == 0
        out = capsys.readouterr().out.splitlines()
        assert out[0] == CSV_HEADER
        assert out[1].startswith("nids,nest-log,2,1,")

    def test_report_renders_from_csv(self, tmp_path):
        csv_path = tmp_path / "r.csv"
        emit_csv([RunStats("micro", "flat", 1, 1, 10, 0, 0, 0, 0.5)], csv_path)
        code = main(["report", "--csv", str(csv_path)])
        assert code == 0
        assert (tmp_path / "r_throughput.png").exists()

    def test_config_error_exit_code(self):
        assert main(["micro", "--threads", "1", "--txs", "0"]) == 2

    def test_usage_error_exit_code(self):
        with pytest.raises(SystemExit) as err:
            main(["micro", "--threads", "1", "--key-range", "7"])
        assert err.value.code == 2

    def test_missing_subcommand_rejected(self):
        with pytest.raises(SystemExit):
            main([])
