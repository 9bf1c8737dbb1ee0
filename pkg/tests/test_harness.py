from __future__ import annotations

import json

import pytest

from xteam.errors import CouplingDecayRefusedError, ParseError, SemanticError
from xteam.harness.cli import main
from xteam.harness.config import validate_config
from xteam.harness.experiments import run
from xteam.harness.records import write_record


def cfg_text(**kw):
    return json.dumps(kw, indent=2)


def test_minimal_config_gets_defaults():
    cfg = validate_config(cfg_text(experiment="tv-bound", seed=1))
    assert cfg.M == 10_000 and cfg.K == 100 and cfg.T == 1.0


def test_missing_seed_is_named():
    with pytest.raises(SemanticError) as exc:
        validate_config(cfg_text(experiment="tv-bound"))
    assert any("seed" in msg for _, msg in exc.value.errors)


def test_seed_override_supplies_a_missing_seed():
    assert validate_config(cfg_text(experiment="tv-bound"), seed_override=5).seed == 5


def test_girsanov_check_needs_a_bounded_cost():
    text = cfg_text(experiment="girsanov-check", seed=1, cost={"form": "mean-field", "expr": "x**2"})
    with pytest.raises(SemanticError) as exc:
        validate_config(text)
    (line, msg), = exc.value.errors
    assert "uniform bound" in msg and line == 4


def test_errors_carry_line_numbers():
    text = '{\n  "experiment": "tv-bound",\n  "seed": 1,\n  "bogus": 3\n}'
    with pytest.raises(SemanticError) as exc:
        validate_config(text)
    assert exc.value.errors == [(4, "unknown field 'bogus'")]
    with pytest.raises(ParseError) as exc:
        validate_config('{\n  "seed": 1,\n}')
    assert exc.value.errors[0][0] == 3


def test_unknown_experiment_is_rejected():
    with pytest.raises(SemanticError):
        validate_config(cfg_text(experiment="nope", seed=1))


PERM3 = {
    "experiment": "perm-invariance", "seed": 3, "M": 50, "grid": {"T": 1.0, "K": 10},
    "params": {"cases": [{
        "label": "n3",
        "dynamics": {"name": "mf-attraction", "mode": "coupled"},
        "cost": {"form": "mean-field", "expr": "min(1, (x - mean_x)**2) + 0.1*u**2"},
        "init": {"mean": [[0.2], [0.0], [-0.4]], "cov": [[1.0]]},
        "profile": [{"type": "linear", "K": [[g]], "clip": [[-1.0, 1.0]]} for g in (-0.1, -0.5, 0.3)],
    }]},
}


def test_perm_invariance_three_agents():
    rec = run(validate_config(json.dumps(PERM3)))
    assert rec.passed and rec.metrics["n3"]["permutations"] == 6


def test_tv_bound_two_slot_verdict_passes():
    rec = run(validate_config(cfg_text(experiment="tv-bound", seed=2, params={"N": 5, "m": [2], "laws": 10})))
    bound = next(v for v in rec.verdicts if "<=" in v.name)
    assert bound.passed
    assert all(r["tv"] <= 0.2 for r in rec.rows)


def test_lqg_validate_scalar():
    text = cfg_text(experiment="lqg-validate", seed=4, M=20_000, grid={"T": 1.0, "K": 50}, params={"instances": [
        {"label": "scalar", "lqg": {"N": 1, "A": [[-0.5]], "B": [[1.0]], "sigma": [[0.8]], "q_self": [[1.0]],
                                    "q_mean": [[0.0]], "r": [[0.5]], "T": 1.0, "x0_mean": [1.0]}}]})
    rec = run(validate_config(text))
    assert rec.passed and rec.metrics["scalar"]["rel_err"] < 0.02


def test_record_bytes_are_reproducible(tmp_path):
    cfg = validate_config(json.dumps(PERM3))
    a = write_record(run(cfg), tmp_path / "a", "csv")
    b = write_record(run(cfg), tmp_path / "b", "csv")
    assert (a / "record.json").read_bytes() == (b / "record.json").read_bytes()
    assert (a / "rows.csv").read_bytes() == (b / "rows.csv").read_bytes()
    assert a == tmp_path / "a" / "perm-invariance" / "3"


def test_epsilon_gap_refuses_coupling_without_decay():
    text = cfg_text(experiment="epsilon-gap", seed=5, M=400, grid={"T": 1.0, "K": 10}, N_schedule=[2, 8],
                    dynamics={"name": "mf-attraction", "mode": "coupled"},
                    cost={"form": "mean-field", "expr": "x**2"}, init={"mean": [1.0], "cov": [[1.0]]},
                    params={"gains": [[-0.5]], "family": {"lo": -1, "hi": 1, "clip": [[-1, 1]]},
                            "mv_particles": 512})
    with pytest.raises(CouplingDecayRefusedError):
        run(validate_config(text))


# command line

def write(tmp_path, name, obj):
    p = tmp_path / name
    p.write_text(json.dumps(obj) if not isinstance(obj, str) else obj)
    return p


def test_cli_exit_codes(tmp_path, capsys):
    out = str(tmp_path / "out")
    good = write(tmp_path, "good.json", PERM3)
    assert main(["run", str(good), "--outdir", out]) == 0
    assert (tmp_path / "out" / "perm-invariance" / "3" / "rows.jsonl").exists()
    failing = write(tmp_path, "fail.json", {"experiment": "tv-bound", "seed": 1, "params": {"laws": 5}})
    assert main(["run", str(failing), "--outdir", out]) == 1
    bad = write(tmp_path, "bad.json", '{"experiment": "tv-bound"}')
    assert main(["run", str(bad), "--outdir", out]) == 2
    assert "seed" in capsys.readouterr().err
    boom = dict(PERM3, params={"cases": [dict(PERM3["params"]["cases"][0],
                                              dynamics={"name": "expr", "expr": "x**3 + 0*mean_x",
                                                        "mode": "coupled"},
                                              init={"mean": [5.0]})]})
    assert main(["run", str(write(tmp_path, "boom.json", boom)), "--outdir", out]) == 3


def test_cli_validate_and_oracle(tmp_path, capsys):
    assert main(["validate", str(write(tmp_path, "c.json", {"experiment": "tv-bound", "seed": 9}))]) == 0
    assert json.loads(capsys.readouterr().out)["grid"] == {"T": 1.0, "K": 100}
    spec = {"N": 1, "A": [[0.0]], "B": [[1.0]], "sigma": [[0.0]], "Q": [[1.0]], "R": [[1.0]], "T": 1.0,
            "x0_mean": [1.0], "K": 50}
    assert main(["oracle", str(write(tmp_path, "s.json", spec))]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["K"] == 50 and res["cost"] > 0


def test_cli_suite_aggregates(tmp_path):
    d = tmp_path / "configs"
    d.mkdir()
    write(d, "a.json", PERM3)
    assert main(["suite", str(d), "--outdir", str(tmp_path / "o"), "--format", "csv"]) == 0
    write(d, "b.json", {"experiment": "tv-bound", "seed": 1, "params": {"laws": 5}})
    assert main(["suite", str(d), "--outdir", str(tmp_path / "o")]) == 1
