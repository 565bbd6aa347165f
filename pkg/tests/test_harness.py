import json

import pytest

from bufsgd import PairingError, compare_suite, run_experiment, with_overrides
from bufsgd.cli import main as cli_main
from bufsgd.harness import buffer_coverage_warnings
from conftest import quad_config


class TestRunExperiment:
    def test_writes_metrics_and_summary(self, tmp_path):
        summary = run_experiment(quad_config(steps=50), tmp_path)
        csv = (tmp_path / "metrics.csv").read_text().splitlines()
        assert csv[0] == ("t,time,loss,grad_norm_sq,agg_norm_sq,eta,"
                          "tau_min,tau_mean,tau_max,n_msgs,byz_msgs,byz_senders")
        assert len(csv) == 51
        loaded = json.loads((tmp_path / "summary.json").read_text())
        assert loaded == summary
        assert summary["steps"] == 50
        assert summary["sends"] == summary["deliveries"]
        assert summary["empirical_D"] > 0
        assert summary["completed"] and not summary["diverged"]

    def test_rerun_is_byte_identical(self, tmp_path):
        cfg = quad_config(steps=80, workers=6, buffers=3, aggregator="median",
                          attack="randdisturb", r=1)
        run_experiment(cfg, tmp_path / "a")
        run_experiment(cfg, tmp_path / "b")
        assert (tmp_path / "a/metrics.csv").read_bytes() == (tmp_path / "b/metrics.csv").read_bytes()
        assert (tmp_path / "a/summary.json").read_bytes() == (tmp_path / "b/summary.json").read_bytes()

    def test_seed_override(self, tmp_path):
        s1 = run_experiment(quad_config(steps=30), tmp_path / "a", seed=1)
        s2 = run_experiment(quad_config(steps=30), tmp_path / "b", seed=2)
        assert s1["seed"] == 1 and s2["seed"] == 2
        assert s1["final_loss"] != s2["final_loss"]

    def test_bound_reported_for_robust_rules(self, tmp_path):
        cfg = quad_config(steps=30, workers=6, buffers=3, aggregator="median")
        summary = run_experiment(cfg, tmp_path)
        assert summary["second_moment_bound_empirical"] > 0
        cfg_mean = quad_config(steps=30)
        assert run_experiment(cfg_mean, tmp_path)["second_moment_bound_empirical"] is None

    def test_starvation_writes_partial_output_with_marker(self, tmp_path):
        cfg = quad_config(workers=2, buffers=2, steps=50,
                          attack="stale", attack_workers=(1,), r=1,
                          attack_delay=1e7, starvation_window=150.0)
        summary = run_experiment(cfg, tmp_path)
        assert summary["starved"] and not summary["completed"]
        assert (tmp_path / "metrics.csv").exists()

    def test_divergence_flagged(self, tmp_path):
        cfg = quad_config(workers=6, buffers=3, aggregator="mean", steps=300,
                          attack="neggrad", r=1, attack_k=10.0)
        summary = run_experiment(cfg, tmp_path)
        assert summary["diverged"]


class TestBufferCoverage:
    def test_warns_when_buffer_fully_byzantine(self):
        # workers 0 and 3 both land in buffer 0 of 3
        cfg = quad_config(workers=6, buffers=3, aggregator="mean",
                          attack="neggrad", attack_workers=(0, 3))
        warnings = buffer_coverage_warnings(cfg)
        assert len(warnings) == 1 and "buffer 0" in warnings[0]

    def test_quiet_when_buffers_mixed(self):
        cfg = quad_config(workers=6, buffers=3, aggregator="median",
                          attack="neggrad", attack_workers=(0,), r=1)
        assert buffer_coverage_warnings(cfg) == []


class TestSuite:
    def _configs(self):
        base = dict(steps=60, workers=6, buffers=3, n=120, d=4, seed=3)
        baseline = quad_config(**base, aggregator="median", name="noattack", role="baseline")
        variant = quad_config(**base, aggregator="median", attack="neggrad", r=1,
                              name="ng_median", accept_loss_ratio=2.0)
        return baseline, variant

    def test_paired_report(self, tmp_path):
        baseline, variant = self._configs()
        report = compare_suite([baseline, variant], tmp_path)
        assert report["baseline"] == "noattack"
        (row,) = report["rows"]
        assert row["name"] == "ng_median"
        assert row["ratio"] == pytest.approx(row["final_loss"] / report["baseline_final_loss"])
        assert (tmp_path / "report.csv").exists() and (tmp_path / "report.json").exists()

    def test_identical_pair_has_zero_delta(self):
        baseline, _ = self._configs()
        clone = with_overrides(baseline, name="clone", role="variant")
        report = compare_suite([baseline, clone])
        (row,) = report["rows"]
        assert row["delta"] == 0.0 and row["ratio"] == 1.0

    def test_mismatched_tasks_rejected(self):
        baseline, variant = self._configs()
        with pytest.raises(PairingError, match="differ only in"):
            compare_suite([baseline, with_overrides(variant, eta=0.05)])

    def test_baseline_required(self):
        _, variant = self._configs()
        with pytest.raises(PairingError, match="baseline"):
            compare_suite([variant, with_overrides(variant, name="v2")])

    def test_tolerance_failure_sets_flag(self):
        baseline, variant = self._configs()
        strict = with_overrides(variant, accept_loss_ratio=1e-6)
        report = compare_suite([baseline, strict])
        assert not report["all_passed"]


class TestCli:
    def test_run_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "run.cfg"
        cfg_path.write_text("task = quadratic\nn = 60\nd = 4\nworkers = 4\nbuffers = 2\n"
                            "aggregator = mean\neta = 0.1\nsteps = 40\nseed = 0\n")
        rc = cli_main(["run", str(cfg_path), "--out", str(tmp_path / "out")])
        assert rc == 0
        summary = json.loads(capsys.readouterr().out)
        assert summary["steps"] == 40
        assert (tmp_path / "out/metrics.csv").exists()

    def test_run_rejects_bad_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "bad.cfg"
        cfg_path.write_text("buffers = 0\nsteps = 10\n")
        assert cli_main(["run", str(cfg_path)]) == 2
        assert "buffer count" in capsys.readouterr().err

    def test_suite_subcommand(self, tmp_path, capsys):
        base = ("task = quadratic\nn = 120\nd = 4\nworkers = 6\nbuffers = 3\n"
                "aggregator = median\neta = 0.1\nsteps = 60\nseed = 3\n")
        (tmp_path / "a_baseline.cfg").write_text(base + "role = baseline\n")
        (tmp_path / "b_attacked.cfg").write_text(
            base + "attack = neggrad\nr = 1\naccept_loss_ratio = 2.0\n")
        rc = cli_main(["suite", str(tmp_path), "--out", str(tmp_path / "out")])
        assert rc == 0
        out = capsys.readouterr().out
        assert "baseline a_baseline" in out

    def test_check_qbr_subcommand(self, capsys):
        assert cli_main(["check-qbr", "--aggregator", "median", "-B", "5",
                         "--trials", "20"]) == 0
        assert "q-BR holds" in capsys.readouterr().out
        assert cli_main(["check-qbr", "--aggregator", "mean", "-B", "5", "--q", "1",
                         "--trials", "20"]) == 1

    def test_bounds_subcommand(self, capsys):
        assert cli_main(["bounds", "10", "4", "0", "1.0", "1.0", "3", "2"]) == 0
        payload = json.loads(capsys.readouterr().out)
        # frozen from the exact rational oracle: C(10, 5) = 10! * 4^4 * 5^5 / (4! 5! 9^9)
        assert payload["C"] == pytest.approx(2.6018241900469, rel=1e-9)
        # frozen from the direct formula oracle: 10 * (e/2pi) * 3 / sqrt(20)
        assert payload["C_upper_bound"] == pytest.approx(2.9021567819, rel=1e-9)
