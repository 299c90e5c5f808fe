import csv
import io

import pytest

import olapnet.bench as bench
from olapnet.bench import (
    REPORT_COLUMNS,
    BenchReport,
    main,
    run_single,
    run_weak_scaling,
    verify_all,
)

SF = "0.001"


class TestRunSingle:
    def test_returns_result_and_row(self):
        result, row = run_single(1, None, 2, SF)
        assert len(result.rows) <= 6
        assert row.query == 1 and row.P == 2 and row.sf == "1/1000"
        assert row.bytes_sent > 0
        assert len(row.rows_scanned_per_node) == 2
        assert 0.0 <= row.comm_fraction <= 1.0

    def test_unknown_query_rejected(self):
        with pytest.raises(ValueError):
            run_single(7, None, 1, SF)

    def test_memory_budget_refusal(self):
        with pytest.raises(MemoryError):
            run_single(1, None, 1, "1000", budget=1 << 20)

    def test_byte_counts_repeatable(self):
        _, a = run_single(3, "bitset", 4, SF)
        _, b = run_single(3, "bitset", 4, SF)
        assert a.bytes_sent == b.bytes_sent
        assert a.phase_bytes == b.phase_bytes
        assert a.rows_scanned_per_node == b.rows_scanned_per_node


class TestReportCsv:
    def test_header_and_shape(self):
        _, row = run_single(14, None, 2, SF)
        text = BenchReport(rows=[row]).to_csv()
        rows = list(csv.reader(io.StringIO(text)))
        assert rows[0] == REPORT_COLUMNS
        assert len(rows) == 2 and len(rows[1]) == len(REPORT_COLUMNS)
        assert rows[1][0] == "14" and rows[1][2] == "2"

    def test_weak_scaling_rows(self):
        report = run_weak_scaling(1, None, SF, [1, 2], repeats=2)
        assert [r.P for r in report.rows] == [1, 2]
        assert [r.sf for r in report.rows] == ["1/1000", "1/500"]
        # rows scanned grow with the data, not the node count
        assert sum(report.rows[1].rows_scanned_per_node) > sum(
            report.rows[0].rows_scanned_per_node)


class TestVerify:
    def test_all_pass_at_small_scale(self, capsys):
        buf = io.StringIO()
        assert verify_all(SF, [1, 2], out=buf)
        lines = buf.getvalue().splitlines()
        assert lines and all(ln.startswith("PASS") for ln in lines)
        # 11 queries, 17 plan/variant combinations, two cluster sizes
        assert len(lines) == 17 * 2

    def test_empty_node_list_warns(self):
        buf = io.StringIO()
        assert verify_all(SF, [], out=buf)
        assert "warning" in buf.getvalue()

    def test_injected_ordering_fault_detected(self, monkeypatch):
        real = bench.run_query

        def mutated(ctx, db, qid, params=None, variant=None):
            res = real(ctx, db, qid, params, variant)
            if res is not None and qid == 1:  # flip the aggregate row order
                res.rows = list(reversed(res.rows))
            return res

        monkeypatch.setattr(bench, "run_query", mutated)
        buf = io.StringIO()
        assert not verify_all(SF, [2], out=buf)
        assert "FAIL q1" in buf.getvalue()

    def test_injected_topk_comparison_fault_detected(self, monkeypatch):
        import olapnet.distops as distops

        # flip the comparison used by every top-k list: keeps the k
        # smallest values instead of the largest
        monkeypatch.setattr(
            distops.TopKList, "_sort_key",
            staticmethod(lambda e: (e[0], e[1])))
        buf = io.StringIO()
        assert not verify_all(SF, [2], out=buf)
        assert "FAIL" in buf.getvalue()


class TestCli:
    def test_run_subcommand_writes_report(self, tmp_path, capsys):
        out = tmp_path / "report.csv"
        rc = main(["run", "--query", "3", "--variant", "bitset",
                   "--nodes", "2", "--sf", SF, "--out", str(out)])
        assert rc == 0
        stdout = capsys.readouterr().out
        assert stdout.startswith("l_orderkey")  # query result CSV
        rows = list(csv.reader(out.open()))
        assert rows[0] == REPORT_COLUMNS and rows[1][1] == "bitset"

    def test_run_with_params(self, capsys):
        rc = main(["run", "--query", "1", "--nodes", "1", "--sf", SF,
                   "--params", "delta_days=3000"])
        assert rc == 0
        out = capsys.readouterr().out
        # the future cutoff selects nothing: result has only its header
        assert out.splitlines()[1].startswith("query,")

    def test_weak_subcommand(self, tmp_path):
        out = tmp_path / "weak.csv"
        rc = main(["weak", "--query", "14", "--base-sf", SF,
                   "--nodes", "1,2", "--out", str(out)])
        assert rc == 0
        assert len(list(csv.reader(out.open()))) == 3

    def test_verify_subcommand_exit_codes(self, capsys, monkeypatch):
        assert main(["verify", "--sf", SF, "--nodes", "1"]) == 0
        real = bench.run_query

        def mutated(ctx, db, qid, params=None, variant=None):
            res = real(ctx, db, qid, params, variant)
            if res is not None and qid == 4:
                res.rows = list(reversed(res.rows))
            return res

        monkeypatch.setattr(bench, "run_query", mutated)
        assert main(["verify", "--sf", SF, "--nodes", "2"]) == 1

    def test_budget_exit_code(self, capsys):
        rc = main(["run", "--query", "1", "--nodes", "1", "--sf", "1000"])
        assert rc == 2
        assert "budget" in capsys.readouterr().err
