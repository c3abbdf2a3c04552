"""
命令行入口测试：退出码、输出文件与可重复性
"""

import json
import unicodedata
from pathlib import Path

import pytest

from main import banner_lines, main
from src.config import ENV_OUT_DIR, ENV_SEED
from src.constants import EXIT_ASSERTION_FAILED, EXIT_CONFIG_ERROR, EXIT_NUMERICAL_ERROR, EXIT_OK
from src.report import LEDGER_COLUMNS, read_ledger_csv
from src.sqlite_repos import LedgerRepo
from src.db import get_db_paths

TRIVIAL_ITERATE = {
    "command": "iterate",
    "seed": 1,
    "grid": {"n_modes": 16},
    "noise": {"enabled": False},
    "iteration": {
        "q_max": 1,
        "dt": 0.05,
        "horizon": 1.0,
        "ell_override": 0.15,
        "jet_overrides": [{"sigma": 2, "eta": 8, "nu": 9, "mu": 9, "theta": 4}],
        "initial_data": "zero",
    },
}


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    monkeypatch.delenv(ENV_SEED, raising=False)
    monkeypatch.delenv(ENV_OUT_DIR, raising=False)


def _write(tmp_path: Path, data, name: str = "run.json") -> str:
    path = tmp_path / name
    path.write_text(data if isinstance(data, str) else json.dumps(data), encoding="utf-8")
    return str(path)


def _run(config_path: str, out_dir: Path, *extra: str) -> int:
    return main(["run", config_path, "--out", str(out_dir), "--quiet", *extra])


class TestConfigErrors:
    def test_malformed_json(self, tmp_path, capsys):
        code = _run(_write(tmp_path, '{"command": "iterate",\n  "seed": }'), tmp_path / "out")
        assert code == EXIT_CONFIG_ERROR
        err = capsys.readouterr().err
        assert "line 2" in err and "column" in err

    def test_unknown_key(self, tmp_path):
        data = dict(TRIVIAL_ITERATE, grid={"n_modes": 16, "extra": 1})
        assert _run(_write(tmp_path, data), tmp_path / "out") == EXIT_CONFIG_ERROR

    def test_unknown_command(self, tmp_path):
        assert _run(_write(tmp_path, {"command": "plot"}), tmp_path / "out") == EXIT_CONFIG_ERROR

    def test_missing_file(self, tmp_path):
        assert _run(str(tmp_path / "nope.json"), tmp_path / "out") == EXIT_CONFIG_ERROR

    def test_bad_seed_flag(self, tmp_path):
        with pytest.raises(SystemExit):
            _run(_write(tmp_path, TRIVIAL_ITERATE), tmp_path / "out", "--seed", "-3")


class TestNumericalErrors:
    def test_noise_cutoff_beyond_grid(self, tmp_path, capsys):
        data = dict(TRIVIAL_ITERATE, noise={"enabled": True, "mode_cutoff": 12, "dt": 0.05})
        assert _run(_write(tmp_path, data), tmp_path / "out") == EXIT_NUMERICAL_ERROR
        assert "noise" in capsys.readouterr().err

    def test_jets_beyond_resolution(self, tmp_path):
        data = {"command": "jets-verify", "grid": {"n_modes": 8},
                "jets": {"settings": [{"sigma": 4, "eta": 16, "nu": 12, "mu": 24, "theta": 16}],
                         "geometric_samples": 10}}
        assert _run(_write(tmp_path, data), tmp_path / "out") == EXIT_NUMERICAL_ERROR


class TestTrivialIterate:
    @pytest.fixture
    def out(self, tmp_path) -> Path:
        out = tmp_path / "out"
        assert _run(_write(tmp_path, TRIVIAL_ITERATE), out) == EXIT_OK
        return out

    def test_outputs(self, out):
        assert (out / "report.json").exists()
        assert (out / "components.csv").exists()
        header = (out / "ledger.csv").read_text(encoding="utf-8").splitlines()[0]
        assert tuple(header.split(",")) == LEDGER_COLUMNS

    def test_report_content(self, out):
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["command"] == "iterate"
        assert report["seed"] == 1
        assert report["config"]["grid"]["n_modes"] == 16
        assert [level["q"] for level in report["results"]["levels"]] == [0, 1]
        assert all(c["passed"] for c in report["checks"])
        assert report["constraints"]

    def test_ledger_matches_report(self, out):
        ledger = read_ledger_csv(out / "ledger.csv")
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert len(ledger) == len(report["ledger"])
        assert {row.level for row in ledger} == {0, 1}

    def test_events_and_ledger_persisted(self, out):
        assert (out / "events.db").exists()
        mirrored = LedgerRepo(get_db_paths(str(out))).list()
        assert len(mirrored) == len(read_ledger_csv(out / "ledger.csv"))

    def test_rerun_is_byte_identical(self, tmp_path, out):
        first = {name: (out / name).read_bytes() for name in ("report.json", "ledger.csv", "components.csv")}
        assert _run(_write(tmp_path, TRIVIAL_ITERATE), out) == EXIT_OK
        for name, data in first.items():
            assert (out / name).read_bytes() == data

    def test_seed_flag_overrides(self, tmp_path):
        out = tmp_path / "seeded"
        assert _run(_write(tmp_path, TRIVIAL_ITERATE), out, "--seed", "99") == EXIT_OK
        assert json.loads((out / "report.json").read_text(encoding="utf-8"))["seed"] == 99

    def test_field_dumps(self, tmp_path):
        out = tmp_path / "dumped"
        assert _run(_write(tmp_path, TRIVIAL_ITERATE), out, "--dump-fields", "0.5") == EXIT_OK
        names = sorted(p.name for p in (out / "fields").iterdir())
        assert names == sorted(f"q{q}_{f}_t0.5.bin" for q in (0, 1) for f in ("v1", "v2", "stress"))

    def test_residual_study_is_reported(self, tmp_path):
        data = json.loads(json.dumps(TRIVIAL_ITERATE))
        data["iteration"].update(residual_dts=[0.05, 0.025], residual_horizon=1.0)
        out = tmp_path / "residual"
        assert _run(_write(tmp_path, data), out) in (EXIT_OK, EXIT_ASSERTION_FAILED)
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        study = report["results"]["residual_study"]
        assert study["dts"] == [0.05, 0.025] and len(study["residuals"]) == 2
        check = [c for c in report["checks"] if c["name"] == "master residual convergence"]
        assert len(check) == 1 and check[0]["target"] == 0.9


class TestOtherCommands:
    def test_holder_sweep(self, tmp_path):
        out = tmp_path / "holder"
        assert _run(_write(tmp_path, {"command": "holder-sweep"}), out) == EXIT_OK
        lines = (out / "holder.csv").read_text(encoding="utf-8").splitlines()
        assert lines[0] == "sigma,p,gap,bound"
        assert len(lines) == 1 + 5 * 2

    def test_failed_check_exits_one(self, tmp_path):
        data = {"command": "jets-verify", "grid": {"n_modes": 16},
                "jets": {"settings": [{"sigma": 2, "eta": 4, "nu": 9, "mu": 9, "theta": 4}],
                         "t_sweep": [0.0], "geometric_samples": 10, "probe_points": 4}}
        out = tmp_path / "overlap"
        assert _run(_write(tmp_path, data), out) == EXIT_ASSERTION_FAILED
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        disjoint = [c for c in report["checks"] if c["name"] == "disjoint supports"]
        assert len(disjoint) == 1 and not disjoint[0]["passed"]

    def test_disabled_assertions_always_pass(self, tmp_path):
        data = {"command": "contraction-demo", "grid": {"n_modes": 16},
                "contraction": {"t_values": [0.01, 0.005], "dt": 0.001},
                "assertions": {"enabled": False}}
        out = tmp_path / "contraction"
        assert _run(_write(tmp_path, data), out) == EXIT_OK
        report = json.loads((out / "report.json").read_text(encoding="utf-8"))
        assert report["checks"] == []
        assert len(report["results"]["points"]) == 2
        assert (out / "contraction.csv").exists()


class TestBanner:
    def test_lines_share_display_width(self):
        def width(line):
            return sum(2 if unicodedata.east_asian_width(ch) in ("W", "F") else 1 for ch in line)

        lines = banner_lines()
        assert len(lines) == 6
        assert len({width(line) for line in lines}) == 1
        assert all(line.endswith(("║", "╗", "╝")) for line in lines)


CONFIG_DIR = Path(__file__).resolve().parents[1] / "configs"
STRUCTURAL = {"divergence v1", "divergence v2", "stress trace", "negative-time extension", "v2 vanishing window",
              "oscillation_identity", "corrector_identity"}


def _run_config(name: str, out: Path) -> dict:
    code = _run(str(CONFIG_DIR / name), out)
    assert code in (EXIT_OK, EXIT_ASSERTION_FAILED)
    return json.loads((out / "report.json").read_text(encoding="utf-8"))


@pytest.mark.acceptance
class TestShippedConfigs:
    def test_reference_run(self, tmp_path):
        report = _run_config("reference.json", tmp_path / "reference")
        dt = report["config"]["iteration"]["dt"]
        assert report["results"]["horizon"] == pytest.approx(2.0)
        assert report["results"]["horizon"] >= 100 * dt

        decrease = [c for c in report["checks"] if c["name"] == "stress decrease"]
        assert [c["detail"] for c in decrease] == ["q=1", "q=2"]
        for c in decrease:
            assert c["value"] is not None
            assert c["passed"] == (c["value"] <= c["target"])

        rows = [r for r in report["ledger"] if r["norm_name"] == "R decrease factor"]
        assert len(rows) == 2 and all(r["value"] is not None for r in rows)

        structural = [c for c in report["checks"] if c["name"] in STRUCTURAL]
        assert {c["name"] for c in structural} == STRUCTURAL
        assert all(c["passed"] for c in structural), [c for c in structural if not c["passed"]]

    def test_energy_study(self, tmp_path):
        report = _run_config("energy-study.json", tmp_path / "energy")
        rows = report["results"]["energy_study"]
        assert [row["K"] for row in rows] == [2.0, 4.0]
        assert all(row["window"] == pytest.approx([2.0, 3.0]) for row in rows)
        assert rows[1]["ratio"] is not None
        scaling = [c for c in report["checks"] if c["name"] == "energy scaling"]
        assert len(scaling) == 1 and scaling[0]["value"] <= 0.2 and scaling[0]["passed"]

    def test_residual_convergence(self, tmp_path):
        report = _run_config("residual-convergence.json", tmp_path / "residual")
        study = report["results"]["residual_study"]
        assert study["residuals"][1] < study["residuals"][0]
        check = [c for c in report["checks"] if c["name"] == "master residual convergence"]
        assert len(check) == 1 and check[0]["value"] >= 0.9 and check[0]["passed"]
