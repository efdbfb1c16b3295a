import json

import pytest

from darecache.cli import main

TABLE1_REQUESTS = [1, 5, 3, 1, 4, 1, 2, 5, 1]


def run_cli(*args):
    return main([str(a) for a in args])


def write_table1_trace(path):
    lines = ["9 5 0"] + [str(r) for r in TABLE1_REQUESTS]
    path.write_text("\n".join(lines) + "\n")


class TestGenTrace:
    def test_single_file_contents(self, tmp_path):
        out = tmp_path / "t.txt"
        assert run_cli("gen-trace", "--files", 1, "--slots", 3, "--seed", 1, "--out", out) == 0
        assert out.read_text().splitlines() == ["3 1 1", "1", "1", "1"]

    def test_same_seed_same_bytes(self, tmp_path):
        a, b = tmp_path / "a.txt", tmp_path / "b.txt"
        for out in (a, b):
            run_cli("gen-trace", "--files", 20, "--alpha", 0.9, "--slots", 500,
                    "--seed", 7, "--out", out)
        assert a.read_bytes() == b.read_bytes()

    def test_missing_seed_is_an_error(self, tmp_path, capsys):
        code = run_cli("gen-trace", "--files", 2, "--slots", 5, "--out", tmp_path / "t.txt")
        assert code == 2
        assert capsys.readouterr().err.startswith("error:")


class TestOffline:
    def test_table1_replay_fif(self, tmp_path):
        trace = tmp_path / "ex.txt"
        write_table1_trace(trace)
        out = tmp_path / "fif.csv"
        code = run_cli("offline", "--trace", trace, "--policy", "fif", "--capacity", 3,
                       "--initial", "1,2,3", "--out", out)
        assert code == 0
        summary = out.read_text().splitlines()[-1].split(",")
        assert summary[0] == "summary" and summary[6] == "3"  # three misses

    def test_table1_replay_dare_rows(self, tmp_path):
        trace = tmp_path / "ex.txt"
        write_table1_trace(trace)
        out = tmp_path / "dare.csv"
        run_cli("offline", "--trace", trace, "--policy", "dare", "--capacity", 3,
                "--initial", "1,2,3", "--out", out)
        rows = {
            (parts[1], parts[3])
            for parts in (line.split(",") for line in out.read_text().splitlines())
            if parts[0] == "write"
        }
        assert {("3", "4"), ("4", "1"), ("2", "1")} <= rows  # c=4, d=1, b=1

    def test_determinism(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            run_cli("offline", "--files", 30, "--alpha", 0.8, "--slots", 400,
                    "--policy", "lru", "--capacity", 5, "--seed", 3, "--out", out)
        assert a.read_bytes() == b.read_bytes()

    def test_rnd_without_seed_fails(self, tmp_path, capsys):
        trace = tmp_path / "ex.txt"
        write_table1_trace(trace)
        code = run_cli("offline", "--trace", trace, "--policy", "rnd", "--capacity", 2,
                       "--out", tmp_path / "x.csv")
        assert code == 2
        assert "seed" in capsys.readouterr().err


class TestSolveRetention:
    def test_analytic_case_csv(self, tmp_path):
        out = tmp_path / "sol.csv"
        code = run_cli("solve-retention", "--files", 1, "--alpha", 0, "--delta", 0.5,
                       "--coefficients", "1", "--out", out)
        assert code == 0
        file_row = [l for l in out.read_text().splitlines() if l.startswith("file,1,")][0]
        parts = file_row.split(",")
        assert parts[3] == "0.5" and parts[4] == "1.0"  # q and mu

    def test_json_format(self, tmp_path):
        out = tmp_path / "sol.json"
        run_cli("solve-retention", "--files", 2, "--alpha", 0.5, "--delta", 0.4,
                "--out", out, "--format", "json")
        payload = json.loads(out.read_text())
        assert payload["achieved_delay"] <= 0.4 + 1e-9
        assert len(payload["q"]) == 2


class TestOnline:
    def test_match_rates_half_miss(self, tmp_path):
        out = tmp_path / "on.csv"
        code = run_cli("online", "--rule", "dare-delta", "--capacity", "inf",
                       "--retention", "match-rates", "--files", 5, "--alpha", 0.7,
                       "--events", 50_000, "--seed", 21, "--out", out)
        assert code == 0
        summary = [l for l in out.read_text().splitlines() if l.startswith("summary,")][0]
        miss_fraction = float(summary.split(",")[5])
        assert abs(miss_fraction - 0.5) < 0.02

    def test_fixed_retention_and_event_log(self, tmp_path):
        out, log = tmp_path / "on.csv", tmp_path / "events.csv"
        code = run_cli("online", "--rule", "lru", "--capacity", 3, "--tau", 2.0,
                       "--files", 6, "--alpha", 0.6, "--events", 500, "--seed", 5,
                       "--out", out, "--event-log", log)
        assert code == 0
        header = log.read_text().splitlines()[0]
        assert header == "time,kind,file,outcome,victim,damage"

    def test_json_report(self, tmp_path):
        out = tmp_path / "on.json"
        run_cli("online", "--rule", "fifo", "--capacity", 4, "--tau", 1.5,
                "--files", 8, "--alpha", 0.5, "--events", 1000, "--seed", 2,
                "--out", out, "--format", "json")
        payload = json.loads(out.read_text())
        assert payload["requests"] == 1000
        assert payload["misses"] >= 1

    def test_solve_regime_requires_delta(self, tmp_path, capsys):
        code = run_cli("online", "--rule", "dare-delta", "--capacity", "inf",
                       "--files", 3, "--events", 100, "--seed", 1,
                       "--out", tmp_path / "x.csv")
        assert code == 2
        assert "policy.delta" in capsys.readouterr().err


class TestConfigHandling:
    def test_config_file_with_flag_override(self, tmp_path):
        cfg = tmp_path / "run.cfg"
        cfg.write_text(
            "catalog.files = 4\ncatalog.alpha = 0.5\nworkload.slots = 50\n"
            "workload.seed = 9\npolicy.name = lru\ncache.capacity = 2\n"
        )
        out = tmp_path / "o.csv"
        code = run_cli("offline", "--config", cfg, "--capacity", 3, "--out", out)
        assert code == 0
        assert "# cache.capacity = 3" in out.read_text()

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("catalog.sizes = 4\n")
        assert run_cli("gen-trace", "--config", cfg, "--seed", 1) == 2
        assert "catalog.sizes" in capsys.readouterr().err

    def test_bad_value_names_key(self, tmp_path, capsys):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("catalog.files = many\n")
        assert run_cli("gen-trace", "--config", cfg, "--seed", 1) == 2
        assert "catalog.files" in capsys.readouterr().err

    def test_help_lists_config_keys(self, capsys):
        with pytest.raises(SystemExit):
            run_cli("--help")
        text = capsys.readouterr().out
        for key in ("catalog.files", "policy.tau-grid", "output.format"):
            assert key in text


class TestExperimentCommands:
    def test_sweep_csv(self, tmp_path):
        out = tmp_path / "sweep.csv"
        code = run_cli("sweep", "--rule", "fifo", "--capacity", 4, "--files", 10,
                       "--alpha", 0.8, "--events", 800, "--tau-grid", "1,4",
                       "--replications", 2, "--seed", 3, "--delta", 0.9, "--out", out)
        assert code == 0
        lines = out.read_text().splitlines()
        header = [l for l in lines if not l.startswith("#")][0]
        assert header.split(",")[:3] == ["tau", "mean_damage", "mean_miss_fraction"]

    def test_experiment_delta_sweep(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "experiment.id = delta-sweep\nexperiment.alphas = 0.85\n"
            "experiment.degrees = 1\nexperiment.files = 5\n"
            "experiment.deltas = 0.5,1.0\nworkload.seed = 4\n"
        )
        out = tmp_path / "exp.csv"
        assert run_cli("experiment", "--config", cfg, "--out", out) == 0
        body = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(body) == 3  # header + two budget rows

    def test_experiment_plot_data(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "experiment.id = delta-sweep\nexperiment.alphas = 0.85\n"
            "experiment.degrees = 1\nexperiment.files = 5\n"
            "experiment.deltas = 1.0\nworkload.seed = 4\n"
        )
        out = tmp_path / "long.csv"
        assert run_cli("experiment", "--config", cfg, "--plot-data", "--out", out) == 0
        header = [l for l in out.read_text().splitlines() if not l.startswith("#")][0]
        assert header.split(",")[-2:] == ["metric", "value"]

    def test_oracle_offline_report(self, tmp_path):
        out = tmp_path / "oracle.csv"
        code = run_cli("oracle", "--kind", "offline", "--instances", 5, "--seed", 11,
                       "--out", out)
        assert code == 0
        body = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(body) == 6
        assert "damage_equal" in body[0]

    def test_cr_alias_runs(self, tmp_path):
        cfg = tmp_path / "cr.cfg"
        cfg.write_text(
            "catalog.files = 10\nexperiment.alphas = 0.95\n"
            "experiment.capacities = 3\nworkload.slots = 400\n"
            "experiment.replications = 1\nworkload.seed = 6\n"
        )
        out = tmp_path / "cr.csv"
        assert run_cli("cr", "--config", cfg, "--out", out) == 0
        header = [l for l in out.read_text().splitlines() if not l.startswith("#")][0]
        assert "cr_dare_star" in header and "cr_lru_star" in header

    def test_experiment_determinism(self, tmp_path):
        cfg = tmp_path / "exp.cfg"
        cfg.write_text(
            "experiment.id = offline-tradeoff\nexperiment.alphas = 0.65\n"
            "experiment.capacities = 4\ncatalog.files = 12\nworkload.slots = 300\n"
            "experiment.replications = 2\nworkload.seed = 10\n"
        )
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert run_cli("experiment", "--config", cfg, "--out", out) == 0
        assert a.read_bytes() == b.read_bytes()
