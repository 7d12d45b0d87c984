import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from ttasched.cli import build_parser, main
from ttasched.presets import (
    network_to_document,
    offline_to_document,
    uniform_profile,
    worked_instance,
)
from ttasched.latency import profile_to_document


class TestParser:
    def test_subcommands_exist(self):
        parser = build_parser()
        args = parser.parse_args(
            ["assess", "--history", "h.jsonl", "--current", "c.jsonl"]
        )
        assert args.command == "assess"
        assert args.kl_mode == "gaussian"
        args = parser.parse_args(["oracle-check", "--instances", "7"])
        assert args.command == "oracle-check"
        assert args.instances == 7
        assert args.seed == 0

    def test_schedule_defaults_mirror_shipped_configuration(self):
        args = build_parser().parse_args(
            ["schedule", "--importance", "a.json", "--profile", "p.json"]
        )
        assert args.sigma == 0.33
        assert args.resolution == 500
        assert not args.oracle


class TestAssessCommand:
    def test_identical_files_give_zero_vector(self, fixtures_dir, tmp_path, capsys):
        history = fixtures_dir / "stats_history.jsonl"
        out = tmp_path / "imp.json"
        rc = main(
            ["assess", "--history", str(history), "--current", str(history),
             "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["a"] == [0.0] * 10

    def test_shifted_fixture_ranks_layers_3_and_7(self, fixtures_dir, tmp_path):
        out = tmp_path / "imp.json"
        rc = main(
            ["assess",
             "--history", str(fixtures_dir / "stats_history.jsonl"),
             "--current", str(fixtures_dir / "stats_current.jsonl"),
             "--network", str(fixtures_dir / "network_recovery10.json"),
             "--out", str(out)]
        )
        assert rc == 0
        a = json.loads(out.read_text())["a"]  # backward order
        order = np.argsort(a)[::-1] + 1
        top_forward = {10 - int(b) for b in order[:2]}
        assert top_forward == {3, 7}

    def test_layer_count_mismatch_exits_2(self, fixtures_dir, tmp_path, capsys):
        clipped = tmp_path / "short.jsonl"
        lines = (fixtures_dir / "stats_current.jsonl").read_text().splitlines()
        clipped.write_text("\n".join(lines[:7]) + "\n")
        rc = main(
            ["assess",
             "--history", str(fixtures_dir / "stats_history.jsonl"),
             "--current", str(clipped), "--out", "-"]
        )
        assert rc == 2
        assert "layer 7" in capsys.readouterr().err

    def test_missing_file_exits_2(self, tmp_path, capsys):
        rc = main(
            ["assess", "--history", str(tmp_path / "nope.jsonl"),
             "--current", str(tmp_path / "nope.jsonl")]
        )
        assert rc == 2


class TestPredictCommand:
    def test_offline_state_reproduces_offline_profile(self, fixtures_dir, tmp_path):
        out = tmp_path / "profile.json"
        rc = main(
            ["predict",
             "--network", str(fixtures_dir / "network.json"),
             "--offline-profile", str(fixtures_dir / "offline_profile.json"),
             "--device", str(fixtures_dir / "device.json"),
             "--state-trace", str(fixtures_dir / "trace.json"),
             "--out", str(out)]
        )
        assert rc == 0
        produced = json.loads(out.read_text())
        offline = json.loads((fixtures_dir / "offline_profile.json").read_text())
        offline_by_id = {r["layer_id"]: r for r in offline["layers"]}
        for rec in produced["layers"]:
            want = offline_by_id[rec["layer_id"]]
            assert rec["t_b_ms"] == pytest.approx(want["t_b_off_ms"], rel=1e-12)
            assert rec["t_re_ms"] == pytest.approx(want["t_re_off_ms"], rel=1e-12)

    def test_contended_state_scales_within_factor_bracket(
        self, fixtures_dir, tmp_path
    ):
        # trace_hot.json switches to the combined condition at t=0
        trace = tmp_path / "trace_hot.json"
        trace.write_text(
            json.dumps(
                {
                    "horizon_ms": 1e9,
                    "records": [{"t_ms": 0.0, "n": 3, "tem_c": 60.0, "phi": 0.3}],
                }
            )
        )
        out = tmp_path / "profile.json"
        rc = main(
            ["predict",
             "--network", str(fixtures_dir / "network.json"),
             "--offline-profile", str(fixtures_dir / "offline_profile.json"),
             "--device", str(fixtures_dir / "device.json"),
             "--state-trace", str(trace),
             "--out", str(out)]
        )
        assert rc == 0
        produced = json.loads(out.read_text())
        offline = json.loads((fixtures_dir / "offline_profile.json").read_text())
        off_total = sum(r["t_b_off_ms"] for r in offline["layers"])
        got_total = produced["totals"]["t_b_ms"]
        # pi1 = 1.6 * 4.3 = 6.88, pi2 = 2.4 on this device
        assert 2.4 * off_total <= got_total <= 6.88 * off_total

    def test_missing_device_file_exits_2(self, fixtures_dir, tmp_path, capsys):
        rc = main(
            ["predict",
             "--network", str(fixtures_dir / "network.json"),
             "--offline-profile", str(fixtures_dir / "offline_profile.json"),
             "--device", str(tmp_path / "missing_device.json"),
             "--state-trace", str(fixtures_dir / "trace.json")]
        )
        assert rc == 2


def write_worked_instance(tmp_path):
    imp, profile = worked_instance()
    imp_path = tmp_path / "importance.json"
    imp_path.write_text(json.dumps({"a": [5.0, 1.0, 4.0]}))
    from ttasched.presets import recovery_network

    # a 3-layer all-selectable network shell for serialization
    net = recovery_network(3)
    doc = profile_to_document(net, profile)
    profile_path = tmp_path / "profile.json"
    profile_path.write_text(json.dumps(doc))
    return imp_path, profile_path


class TestScheduleCommand:
    def test_worked_instance_budget7(self, tmp_path):
        imp_path, profile_path = write_worked_instance(tmp_path)
        out = tmp_path / "schedule.json"
        # budget 7 = sigma * 12 - 3  =>  sigma = 10/12
        rc = main(
            ["schedule", "--importance", str(imp_path), "--profile",
             str(profile_path), "--sigma", str(10.0 / 12.0), "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads(out.read_text())
        assert doc["selected_backward_indices"] == [1, 3]
        assert doc["achieved_importance"] == 9.0
        assert doc["budget_ms"] == pytest.approx(7.0)
        assert doc["slack_ms"] == pytest.approx(0.0)

    def test_oracle_flag_prints_match(self, tmp_path, capsys):
        imp_path, profile_path = write_worked_instance(tmp_path)
        rc = main(
            ["schedule", "--importance", str(imp_path), "--profile",
             str(profile_path), "--sigma", str(10.0 / 12.0), "--oracle",
             "--out", str(tmp_path / "s.json")]
        )
        assert rc == 0
        assert "MATCH" in capsys.readouterr().err

    def test_tiny_sigma_warns_and_emits_empty_schedule(self, tmp_path, capsys):
        imp_path, profile_path = write_worked_instance(tmp_path)
        out = tmp_path / "schedule.json"
        rc = main(
            ["schedule", "--importance", str(imp_path), "--profile",
             str(profile_path), "--sigma", "0.1", "--out", str(out)]
        )
        assert rc == 0
        assert "empty strategy" in capsys.readouterr().err
        doc = json.loads(out.read_text())
        assert doc["selected_backward_indices"] == []
        assert doc["budget_ms"] == 0.0


class TestSimulateCommand:
    def test_byte_identical_reports(self, fixtures_dir, tmp_path):
        scenario = fixtures_dir / "scenario_drift.json"
        outs = []
        for i in range(2):
            out = tmp_path / f"rep{i}.json"
            csv_out = tmp_path / f"rep{i}.csv"
            rc = main(
                ["simulate", str(scenario), "--out", str(out), "--csv", str(csv_out)]
            )
            assert rc == 0
            outs.append((out.read_bytes(), csv_out.read_bytes()))
        assert outs[0] == outs[1]

    def test_report_contains_speedup_fields(self, fixtures_dir, tmp_path):
        out = tmp_path / "rep.json"
        rc = main(["simulate", str(fixtures_dir / "scenario_drift.json"),
                   "--out", str(out)])
        assert rc == 0
        agg = json.loads(out.read_text())["aggregates"]
        assert "speedup_vs_full" in agg
        assert "latency_ratio_vs_full" in agg
        assert agg["speedup_vs_full"] > 1.0

    def test_seed_override_changes_report(self, fixtures_dir, tmp_path):
        scenario = fixtures_dir / "scenario_drift.json"
        base = tmp_path / "base.json"
        reseeded = tmp_path / "reseeded.json"
        assert main(["simulate", str(scenario), "--out", str(base)]) == 0
        assert main(
            ["simulate", str(scenario), "--seed", "99", "--alpha", "0.1",
             "--out", str(reseeded)]
        ) == 0
        assert base.read_bytes() != reseeded.read_bytes()
        assert json.loads(reseeded.read_text())["seed"] == 99

    def test_malformed_scenario_exits_2(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text(json.dumps({"mode": "sequential", "unknown_knob": 3}))
        rc = main(["simulate", str(bad)])
        assert rc == 2
        err = capsys.readouterr().err
        assert "bad.json" in err and "unknown_knob" in err

    def test_missing_scenario_exits_2(self, tmp_path):
        assert main(["simulate", str(tmp_path / "missing.json")]) == 2

    def test_scenario_missing_required_field_named(self, fixtures_dir, tmp_path, capsys):
        scenario = json.loads((fixtures_dir / "scenario_drift.json").read_text())
        del scenario["batches"]
        # keep file references resolvable from the fixtures directory
        for key in ("network", "offline_profile", "device", "state_trace"):
            scenario[key] = str(fixtures_dir / scenario[key])
        bad = tmp_path / "scenario.json"
        bad.write_text(json.dumps(scenario))
        assert main(["simulate", str(bad)]) == 2
        err = capsys.readouterr().err
        assert "scenario.json" in err and "batches" in err

    def test_scenario_malformed_controller_exits_2(self, fixtures_dir, tmp_path, capsys):
        scenario = json.loads((fixtures_dir / "scenario_drift.json").read_text())
        scenario["controller"] = {"unknown_gain": 2.0}
        for key in ("network", "offline_profile", "device", "state_trace"):
            scenario[key] = str(fixtures_dir / scenario[key])
        bad = tmp_path / "scenario.json"
        bad.write_text(json.dumps(scenario))
        assert main(["simulate", str(bad)]) == 2
        assert "controller" in capsys.readouterr().err


class TestOracleCheckCommand:
    def test_small_run_reports_matches(self, capsys):
        rc = main(["oracle-check", "--instances", "20", "--max-n", "8"])
        assert rc == 0
        out = capsys.readouterr().out
        assert "20/20 match" in out
        assert "wall" in out

    def test_zero_instances_exits_2(self, capsys):
        assert main(["oracle-check", "--instances", "0"]) == 2

    def test_excessive_max_n_exits_2(self):
        assert main(["oracle-check", "--instances", "1", "--max-n", "25"]) == 2

    def test_mismatch_exits_1_with_replayable_instance(self, capsys, monkeypatch):
        import ttasched.cli as cli_mod
        from ttasched.scheduler import CertificationReport

        fake = CertificationReport(
            instances=2,
            matches=1,
            elapsed_s=0.01,
            failures=({"index": 1, "instance": {"a": [1.0]}},),
        )
        monkeypatch.setattr(cli_mod, "certify", lambda **kw: fake)
        rc = main(["oracle-check", "--instances", "2"])
        assert rc == 1
        captured = capsys.readouterr()
        assert "1/2 match" in captured.out
        assert '"index": 1' in captured.err


class TestEntryPoint:
    def test_module_invocation(self, fixtures_dir):
        proc = subprocess.run(
            [sys.executable, "-m", "ttasched.cli", "oracle-check",
             "--instances", "5", "--max-n", "6"],
            capture_output=True,
            text=True,
            cwd=str(Path(__file__).parent.parent),
        )
        assert proc.returncode == 0
        assert "5/5 match" in proc.stdout
