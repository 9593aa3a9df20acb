import copy
import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from iobs.cli import csv_header, main, run_check
from iobs.config import load_config, parse_config
from iobs.errors import ConfigError
from iobs.sim import simulate

from conftest import CONFIG_DIR, load_config_dict

GOLDEN = Path(__file__).parent / "golden"

SCALAR = {
    "kind": "ct-lti",
    "plant": {"F": [[1]], "H": [[1]]},
    "target": {"A": [[-1]], "B": [[1]]},
    "x0": {"value": [0.5], "lo": [0], "hi": [1]},
    "sim": {"horizon": 1, "step": 0.01},
}


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def schema(obj):
    """Key structure and JSON types of a report, for golden comparison."""
    if isinstance(obj, dict):
        return {k: schema(v) for k, v in sorted(obj.items())}
    if isinstance(obj, bool):
        return "bool"
    if isinstance(obj, (int, float)):
        return "number"
    if obj is None:
        return "null"
    return type(obj).__name__


class TestCheck:
    def test_example3_uco(self, tmp_path, capsys):
        rep_path = tmp_path / "check.json"
        code = main(["check", str(CONFIG_DIR / "example3_dtltv.json"), "--report", str(rep_path)])
        assert code == 0
        rep = json.loads(rep_path.read_text())
        uco = next(c for c in rep["checks"] if c["name"] == "uco")
        assert uco["passed"] and uco["details"]["m"] == [2] and uco["details"]["c_o"] > 0
        assert "PASS uco" in capsys.readouterr().out

    def test_not_observable(self, tmp_path, capsys):
        doc = copy.deepcopy(SCALAR)
        doc["plant"] = {"F": [[1, 0], [0, 2]], "H": [[1, 0]]}
        doc["target"] = "auto"
        doc["x0"] = {"value": [0, 0], "lo": [-1, -1], "hi": [1, 1]}
        rep_path = tmp_path / "r.json"
        assert main(["check", write(tmp_path, doc), "--json", str(rep_path)]) == 1
        assert "NotObservable" in capsys.readouterr().out
        assert "NotObservable" in rep_path.read_text()

    def test_malformed_expression(self, tmp_path, capsys):
        doc = load_config_dict("example2_pendulum.json")
        doc["plant"]["F"][1][0] = "-9.8/(1 + 0.3*sin(0.5*t)"
        assert main(["check", write(tmp_path, doc)]) == 2
        out = capsys.readouterr().out
        assert "plant.F[1][0]" in out and "at byte 5" in out

    def test_lti_example1(self):
        code, rep = run_check(CONFIG_DIR / "example1_lti8.json")
        assert code == 0
        tr = next(c for c in rep["checks"] if c["name"] == "transformation")
        assert tr["details"]["sylvester_residual"] < 1e-10

    def test_pendulum_advisory(self):
        code, rep = run_check(CONFIG_DIR / "example2_pendulum.json")
        assert code == 0
        obs = next(c for c in rep["checks"] if c["name"] == "empirical_observability")
        assert not obs["hard"] and obs["details"]["c_o"] > 0

    def test_bad_target_is_check_failure(self, tmp_path):
        doc = load_config_dict("example3_dtltv.json")
        doc["target"]["gain"] = 6
        code, rep = run_check(write(tmp_path, doc))
        assert code == 1 and rep["checks"][0]["error"] == "BadTargetStructure"


class TestDesign:
    def test_scalar(self, tmp_path):
        out = tmp_path / "d.json"
        assert main(["design", write(tmp_path, SCALAR), "-o", str(out)]) == 0
        art = json.loads(out.read_text())
        assert art["T"] == [[0.5]] and art["T_inv"] == [[2.0]]

    def test_idempotent(self, tmp_path):
        cfg = str(CONFIG_DIR / "example1_lti8.json")
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert main(["design", cfg, "-o", str(a)]) == 0
        assert main(["design", cfg, "-o", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()
        art = json.loads(a.read_text())
        assert art["certificates"]["sylvester_residual"] < 1e-10
        T, T_inv = np.array(art["T"]), np.array(art["T_inv"])
        np.testing.assert_allclose(T @ T_inv, np.eye(8), atol=1e-10)

    def test_ltv_rejected(self, tmp_path, capsys):
        code = main(["design", str(CONFIG_DIR / "example3_dtltv.json"), "-o", str(tmp_path / "x.json")])
        assert code == 2
        assert "design is trajectory-valued; use simulate" in capsys.readouterr().err

    def test_design_failure_exit_1(self, tmp_path):
        doc = copy.deepcopy(SCALAR)
        doc["target"] = {"A": [[-1]], "B": [[0]]}
        assert main(["design", write(tmp_path, doc), "-o", str(tmp_path / "x.json")]) == 1


class TestSimulate:
    def test_example3_outputs(self, tmp_path):
        csv_p, rep_p, gp = tmp_path / "o.csv", tmp_path / "o.json", tmp_path / "o.gp"
        code = main(["simulate", str(CONFIG_DIR / "example3_dtltv.json"), "-o", str(csv_p),
                     "--report", str(rep_p), "--plot-script", str(gp)])
        assert code == 0
        rep = json.loads(rep_p.read_text())
        assert rep["kstar"]["reached"] and rep["kstar"]["index"] == 2
        assert "set datafile separator ','" in gp.read_text()
        with open(csv_p, newline="") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == csv_header(2, 2)
        assert len(rows) == 102
        assert csv_p.read_bytes().count(b"\r\n") == 102
        tr = simulate(load_config(CONFIG_DIR / "example3_dtltv.json").scenario)
        parsed = np.array([[float(v) for v in r[1:3]] for r in rows[1:]])
        assert np.array_equal(parsed, tr.x)
        assert [int(r[-2]) for r in rows[1:]] == tr.contained.astype(int).tolist()

    def test_disturbance_free_example1_width(self, tmp_path):
        rep_p = tmp_path / "r.json"
        code = main(["simulate", str(CONFIG_DIR / "example1_lti8_nodist.json"),
                     "-o", str(tmp_path / "o.csv"), "--report", str(rep_p)])
        assert code == 0
        assert json.loads(rep_p.read_text())["final_width"] < 1e-6

    def test_pendulum_x2_columns(self, tmp_path):
        csv_p, rep_p = tmp_path / "p.csv", tmp_path / "p.json"
        assert main(["simulate", str(CONFIG_DIR / "example2_pendulum.json"), "-o", str(csv_p),
                     "--report", str(rep_p)]) == 0
        rep = json.loads(rep_p.read_text())
        with open(csv_p, newline="") as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        i = rep["tstar"]["index"]
        for r in rows[i:]:
            x, lo, hi = float(r["x_2"]), float(r["xlo_2"]), float(r["xhi_2"])
            slack = 1e-7 * (1 + abs(x))
            assert lo - slack <= x <= hi + slack

    def test_bad_bounds_exit_2(self, tmp_path, capsys):
        doc = load_config_dict("example3_dtltv.json")
        doc["signals"]["d"][1] = "0.2*sin(2*k)"
        code = main(["simulate", write(tmp_path, doc), "-o", str(tmp_path / "o.csv")])
        assert code == 2
        err = capsys.readouterr().err
        assert "signals.d[1]" in err and "leaves declared bounds" in err

    def test_non_finite_exit_1(self, tmp_path, capsys):
        doc = copy.deepcopy(SCALAR)
        doc["plant"]["F"] = [[400]]
        doc["sim"] = {"horizon": 10, "step": 0.05}
        with np.errstate(all="ignore"):
            assert main(["simulate", write(tmp_path, doc)]) == 1
        assert "NonFiniteState" in capsys.readouterr().err

    def test_parallel_jobs(self, tmp_path):
        a = load_config_dict("example3_dtltv.json")
        b = copy.deepcopy(a)
        b["sim"]["horizon"] = 50
        out = tmp_path / "out"
        code = main(["simulate", write(tmp_path, a, "a.json"), write(tmp_path, b, "b.json"),
                     "-o", str(out), "--report", str(out), "--jobs", "2"])
        assert code == 0
        assert json.loads((out / "b.json").read_text())["rows"] == 51
        assert (out / "a.csv").exists()

    def test_output_paths_from_config(self, tmp_path):
        doc = load_config_dict("example3_dtltv.json")
        doc["output"] = {"csv": "run.csv", "report": "run.json"}
        assert main(["simulate", write(tmp_path, doc)]) == 0
        assert (tmp_path / "run.csv").exists() and (tmp_path / "run.json").exists()


class TestGolden:
    @pytest.mark.parametrize("name", ["example2_pendulum", "example3_dtltv", "example1_lti8"])
    def test_csv_header(self, name, tmp_path):
        golden = (GOLDEN / f"{name}.header.csv").read_bytes()
        doc = load_config_dict(f"{name}.json")
        doc["sim"]["horizon"] = 0
        csv_p = tmp_path / "o.csv"
        main(["simulate", write(tmp_path, doc), "-o", str(csv_p)])
        assert csv_p.read_bytes().split(b"\r\n")[0] + b"\r\n" == golden

    @pytest.mark.parametrize("kind_name", ["example2_pendulum", "example3_dtltv"])
    def test_report_schema(self, kind_name, tmp_path):
        golden = json.loads((GOLDEN / "report_schema.json").read_text())[kind_name]
        doc = load_config_dict(f"{kind_name}.json")
        doc["sim"]["horizon"] = 2 if kind_name.startswith("example2") else 20
        rep_p = tmp_path / "r.json"
        main(["simulate", write(tmp_path, doc), "-o", str(tmp_path / "o.csv"), "--report", str(rep_p)])
        assert schema(json.loads(rep_p.read_text())) == golden

    def test_byte_stable_runs(self, tmp_path):
        cfg = str(CONFIG_DIR / "example3_dtltv.json")
        outs = []
        for i in range(2):
            c, r = tmp_path / f"{i}.csv", tmp_path / f"{i}.json"
            assert main(["simulate", cfg, "-o", str(c), "--report", str(r)]) == 0
            outs.append((c.read_bytes(), r.read_bytes()))
        assert outs[0] == outs[1]


class TestConfigErrors:
    @pytest.mark.parametrize(
        "mutate, path",
        [
            (lambda d: d["plant"]["F"][0].__setitem__(1, "-1 + 0.5*cos(t)"), "plant.F[0][1]"),
            (lambda d: d["plant"].__setitem__("H", [[1, 0, 0]]), "plant.H"),
            (lambda d: d["plant"]["F"].__setitem__(1, [0]), "plant.F[1]"),
            (lambda d: d["x0"].__setitem__("lo", [3, -2]), "x0"),
            (lambda d: d["x0"].__setitem__("value", [5, -1]), "x0.value"),
            (lambda d: d["signals"].pop("d_bounds"), "signals.d_bounds"),
            (lambda d: d.__setitem__("kind", "hybrid"), "kind"),
            (lambda d: d.__setitem__("extra", 1), "extra"),
            (lambda d: d["target"].__setitem__("gain", -1), "target.gain"),
            (lambda d: d["sim"].__setitem__("horizon", 2.5), "sim.horizon"),
            (lambda d: d["signals"]["w_bounds"].__setitem__("lo", [-0.02, 0]), "signals.w_bounds.lo"),
            (lambda d: d.pop("x0"), "x0"),
        ],
    )
    def test_paths(self, mutate, path):
        doc = load_config_dict("example3_dtltv.json")
        mutate(doc)
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert info.value.path == path

    def test_lti_requires_constant_entries(self):
        doc = copy.deepcopy(SCALAR)
        doc["plant"]["F"] = [["sin(t)"]]
        with pytest.raises(ConfigError) as info:
            parse_config(doc)
        assert info.value.path == "plant.F"

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{")
        assert main(["check", str(p)]) == 2

    def test_missing_file(self, tmp_path):
        assert main(["simulate", str(tmp_path / "none.json")]) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["simulate"])
        assert info.value.code == 2


def test_log_env_var(tmp_path):
    env = {"IOBS_LOG": "DEBUG", "PATH": "/usr/bin:/bin"}
    p = subprocess.run(
        [sys.executable, "-c",
         "import logging, sys; from iobs.cli import main; main(['check', sys.argv[1]]); "
         "print(logging.getLogger().level)", str(CONFIG_DIR / "example3_dtltv.json")],
        capture_output=True, text=True, env=env,
    )
    assert p.returncode == 0
    assert p.stdout.strip().splitlines()[-1] == str(10)
