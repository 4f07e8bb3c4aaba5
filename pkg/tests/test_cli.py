import json
from pathlib import Path

import pytest

from zrplab.cli import Config, ConfigError, main
from zrplab.schema import check_csv, guess_kind
from zrplab.schema import main as schema_main

SIM = """
[model]
family = evans
b = 4
[lattice]
N = 32
[initial]
kind = product
rho = 0.2 + 0.1*sin(2*pi*u)
[run]
T = 0.01
replicas = 2
seed = 3
samples = 3
[observables]
young_ell = 1
young_M = 2
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def run(tmp_path, cmd, text, out="out", extra=()):
    cfg = write(tmp_path, text)
    code = main([*cmd, "--config", cfg, "--out", str(tmp_path / out), *extra])
    return code, tmp_path / out


def csvs_valid(out: Path):
    files = sorted(out.glob("*.csv"))
    assert files
    for f in files:
        check_csv(f, guess_kind(f))
    return files


def test_thermo_outputs(tmp_path):
    code, out = run(tmp_path, ["thermo"], "[model]\nfamily = evans\nb = 4\n")
    assert code == 0
    csvs_valid(out)
    scal = dict(l.split(",") for l in (out / "thermo_scalars.csv").read_text().split()[1:])
    assert abs(float(scal["rho_c"]) - 0.5) < 1e-4
    code, out = run(tmp_path, ["thermo"], "[model]\nfamily = evans\nb = 0\n", out="o0")
    assert "rho_c,inf" in (out / "thermo_scalars.csv").read_text()


@pytest.mark.parametrize("text", ["[model]\n", "[model]\nfamily = evans\nbogus = 1\n",
                                  "[model]\nfamily = evans\n[nope]\nx = 1\n",
                                  "[model]\nfamily = evans\nb = abc\n", "[lattice]\nN = 8\n"])
def test_config_errors_exit_2(tmp_path, text):
    code, _ = run(tmp_path, ["thermo"], text)
    assert code == 2


def test_series_divergence_exit_3(tmp_path):
    code, _ = run(tmp_path, ["thermo"], "[model]\nfamily = evans\nb = 0.5\n[thermo]\nphi_max = 1.0\n")
    assert code == 3


def test_event_budget_exit_4_keeps_partial_outputs(tmp_path):
    code, out = run(tmp_path, ["simulate"], SIM.replace("samples = 3", "samples = 3\nevent_budget = 50"))
    assert code == 4
    man = json.loads((out / "manifest.json").read_text())
    assert man["partial"] and not man["replicas"][0]["complete"]
    assert (out / "snapshots_r000.csv").exists()


def test_failed_assertion_exit_5(tmp_path):
    text = "[model]\nfamily = evans\nb = 4\n[statistic]\nsizes = 50 100\nrho = 1.0\ntolerance = 1e-6\nassert = true\n"
    code, out = run(tmp_path, ["verify", "eoe"], text)
    assert code == 5
    assert json.loads((out / "eoe.json").read_text())["verdict"] == "fail"


def test_eoe_pass(tmp_path):
    text = "[model]\nfamily = evans\nb = 4\n[statistic]\nsizes = 50 100 200 400\nrho = 1.0\ntolerance = 0.05\nassert = true\n"
    code, out = run(tmp_path, ["verify", "eoe"], text)
    assert code == 0
    assert json.loads((out / "eoe.json").read_text())["verdict"] == "pass"
    csvs_valid(out)


def test_simulate_outputs_and_determinism(tmp_path):
    code, a = run(tmp_path, ["simulate"], SIM, out="a")
    assert code == 0
    code, b = run(tmp_path, ["simulate"], SIM, out="b")
    files = csvs_valid(a)
    assert any(f.name.startswith("young_") for f in files)
    for f in a.iterdir():
        assert f.read_bytes() == (b / f.name).read_bytes(), f.name
    man = json.loads((a / "manifest.json").read_text())
    assert [r["stream"] for r in man["replicas"]] == [[3, 0], [3, 1]]
    assert (a / "checkpoint_r001.json").exists()


def test_resolved_config_round_trip(tmp_path):
    code, a = run(tmp_path, ["simulate"], SIM, out="a")
    code = main(["simulate", "--config", str(a / "config.ini"), "--out", str(tmp_path / "rt")])
    assert code == 0
    for f in a.iterdir():
        assert f.read_bytes() == (tmp_path / "rt" / f.name).read_bytes(), f.name


def test_seed_and_replicas_flags(tmp_path):
    code, a = run(tmp_path, ["simulate"], SIM, out="a", extra=["--seed", "99", "--replicas", "1"])
    man = json.loads((a / "manifest.json").read_text())
    assert man["seed"] == 99 and len(man["replicas"]) == 1
    assert "seed = 99" in (a / "config.ini").read_text()


def test_zero_horizon_writes_initial_snapshot_only(tmp_path):
    code, out = run(tmp_path, ["simulate"], SIM.replace("T = 0.01", "T = 0"))
    assert code == 0
    rows = (out / "snapshots_r000.csv").read_text().strip().split("\n")[1:]
    assert len(rows) == 32 and all(r.startswith("0.0,") for r in rows)


def test_env_var_overrides_output_dir(tmp_path, monkeypatch):
    monkeypatch.setenv("ZRPLAB_OUT", str(tmp_path / "env"))
    code, _ = run(tmp_path, ["thermo"], "[model]\nfamily = evans\nb = 4\n", out="ignored")
    assert code == 0
    assert (tmp_path / "env" / "thermo.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_sample_canonical_and_pde(tmp_path):
    code, out = run(tmp_path, ["sample-canonical"], "[model]\nfamily = evans\nb = 4\n[canonical]\nn = 4\nK = 8\nsamples = 50\n")
    assert code == 0
    assert check_csv(out / "canonical.csv", "canonical") == 200
    code, out = run(tmp_path, ["pde"], "[model]\nfamily = evans\nb = 0\n[initial]\nrho = 0.5 + 0.3*sin(2*pi*u)\n"
                    "[run]\nT = 0.005\n[pde]\nG = 64\nsnapshots = 3\n", out="p")
    assert code == 0
    assert check_csv(out / "pde.csv", "pde") == 3 * 64


def test_verify_one_block_identity_all_zero(tmp_path):
    text = ("[model]\nfamily = evans\nb = 0\n[initial]\nkind = grand_canonical\nrho = 0.5\n[run]\nT = 0.01\nreplicas = 3\n"
            "[statistic]\nobservable = eta\nsettings = 16:1 32:2\n")
    code, out = run(tmp_path, ["verify", "one-block"], text)
    assert code == 0
    rows = [l.split(",") for l in (out / "one_block.csv").read_text().split()[1:]]
    assert all(float(r[3]) == 0.0 for r in rows)
    assert json.loads((out / "one_block.json").read_text())["verdict"] == "pass"


def test_verify_other_statistics_run(tmp_path):
    base = ("[model]\nfamily = evans\nb = 4\n[lattice]\nN = 32\n[initial]\nkind = canonical\nrho = 1.0\n"
            "[run]\nT = 0.005\nreplicas = 3\n[statistic]\neps = 0.125\nsamples = 3\n")
    for which in ("continuity", "qv", "jump-bound", "double-block", "energy"):
        code, out = run(tmp_path, ["verify", which], base, out=which)
        assert code == 0, which
        csvs_valid(out)
        assert json.loads(next(out.glob("*.json")).read_text())["verdict"] in ("pass", "fail", "diagnostic")


def test_profile_expression_is_restricted():
    with pytest.raises(ConfigError):
        Config.load(text="[model]\nfamily = evans\n[initial]\nrho = __import__('os')\n").profile_fn()


def test_schema_checker_rejects_bad_rows(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("rho,phibar\n0.1,0.2\n0.2\n")
    assert schema_main([str(p)]) == 1
    p.write_text("rho,phibar\n0.1,nan\n")
    assert schema_main([str(p)]) == 1
    p.write_text("rho,phibar\n0.1,0.09\n")
    assert schema_main([str(p)]) == 0


def test_condensate_keys_need_condensate_kind(tmp_path):
    code, _ = run(tmp_path, ["simulate"], SIM.replace("kind = product", "kind = product\ncondensate_alpha = 0.5"))
    assert code == 2
    code, out = run(tmp_path, ["simulate"], SIM.replace("kind = product", "kind = condensate\ncondensate_alpha = 0.5"),
                    out="c")
    assert code == 0
    rows = (out / "snapshots_r000.csv").read_text().split()[1:33]
    assert max(int(r.split(",")[2]) for r in rows) >= 16
