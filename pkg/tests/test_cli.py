import json
import textwrap

import pytest
import yaml

from fkpath.catalog import CATALOG, ModelSpecError, list_builtin_models, load_model
from fkpath.cli import CSV_SCHEMA, main, run_config

from conftest import M2_ETA_1, M2_GAMMA_1, M2_Z_1


def _write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text))
    return p


ORACLE = """\
experiment: oracle
model:
  builtin: m2
params:
  t: 1.0
output:
  directory: {out}
  formats: [csv, json]
"""

SIMULATE = """\
experiment: simulate
model:
  builtin: m2
params:
  N: 4
  t: 1.0
  replicas: 300
  seed: 42
output:
  directory: {out}
  formats: [csv, json]
"""


def test_oracle_run(tmp_path, capsys):
    cfg = _write(tmp_path, ORACLE.format(out=tmp_path / "out"))
    assert main(["run", str(cfg)]) == 0
    summary = json.loads((tmp_path / "out" / "cfg_summary.json").read_text())
    assert summary["pass"] is True and summary["experiment"] == "oracle"
    assert summary["oracle"]["gamma"] == pytest.approx(M2_GAMMA_1.tolist(), abs=1e-9)
    assert summary["oracle"]["eta"] == pytest.approx(M2_ETA_1.tolist(), abs=1e-9)
    assert summary["oracle"]["z"] == pytest.approx(M2_Z_1, abs=1e-9)
    assert set(summary) >= {"experiment", "params", "estimates", "z_scores", "pass"}
    lines = (tmp_path / "out" / "cfg_oracle.csv").read_text().splitlines()
    assert lines[0] == CSV_SCHEMA and lines[1] == "state,gamma,eta"
    out = capsys.readouterr().out
    assert "PASS          rk_vs_expm" in out and "PASS oracle: 3/3 checks" in out


def test_n_equal_one_is_schema_error(tmp_path, capsys):
    cfg = _write(tmp_path, SIMULATE.replace("N: 4", "N: 1").format(out=tmp_path))
    assert main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "cfg.yaml:5" in err and "params.N" in err and "N >= 2" in err


def test_deterministic_outputs(tmp_path, monkeypatch):
    a = _write(tmp_path, SIMULATE.format(out=tmp_path / "a"))
    assert run_config(a) == 0
    first = (tmp_path / "a" / "cfg_replicas.csv").read_bytes()
    summary = (tmp_path / "a" / "cfg_summary.json").read_bytes()
    assert run_config(a) == 0
    assert (tmp_path / "a" / "cfg_replicas.csv").read_bytes() == first
    monkeypatch.setenv("FKPATH_THREADS", "2")
    assert run_config(a, str(tmp_path / "b")) == 0
    assert (tmp_path / "b" / "cfg_replicas.csv").read_bytes() == first
    assert (tmp_path / "b" / "cfg_summary.json").read_bytes() == summary
    assert first.decode().splitlines()[0] == CSV_SCHEMA


def test_csv_seed_reproduces_replica(tmp_path):
    from fkpath.catalog import m2
    from fkpath.mean_field import simulate_mean_field

    cfg = _write(tmp_path, SIMULATE.format(out=tmp_path))
    run_config(cfg)
    rows = (tmp_path / "cfg_replicas.csv").read_text().splitlines()
    header = rows[1].split(",")
    row = dict(zip(header, rows[7].split(",")))
    b = m2()
    sys = simulate_mean_field(b.model, 4, 1.0, b.initial, int(row["seed"]))
    assert repr(sys.weight) == row["weight"]


@pytest.mark.parametrize("mutation,fragment", [
    (("  t: 1.0\n", "  t: 1.0\n  bogus: 3\n"), "params.bogus"),
    (("  seed: 42\n", ""), "missing required parameter 'seed'"),
    (("builtin: m2", "builtin: m3"), "unknown built-in model"),
    (("experiment: simulate", "experiment: simulat"), "unknown experiment"),
    (("  replicas: 300", "  replicas: 1"), "replicas >= 2"),
    (("  t: 1.0", "  t: -1.0"), "must be > 0"),
    (("  formats: [csv, json]", "  formats: [xml]"), "output.formats"),
    (("  N: 4", "  N: [2, x]"), "params.N[1]"),
])
def test_schema_errors(tmp_path, capsys, mutation, fragment):
    text = SIMULATE.format(out=tmp_path).replace(*mutation)
    cfg = _write(tmp_path, text)
    assert main(["validate", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert fragment in err and "cfg.yaml:" in err


def test_model_schema_error_is_line_anchored(tmp_path, capsys):
    text = """\
    experiment: oracle
    model:
      kind: finite
      rates: [[-1, 1], [2, -2]]
      potential:
        type: constant-vector
        values: [0, -1]
    params:
      t: 1.0
    """
    cfg = _write(tmp_path, text)
    assert main(["run", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "cfg.yaml:7" in err and "model.potential.values" in err


def test_yaml_syntax_error(tmp_path, capsys):
    cfg = _write(tmp_path, "experiment: oracle\nmodel: [unclosed\n")
    assert main(["run", str(cfg)]) == 2
    assert "schema error" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, capsys):
    text = """\
    experiment: oracle
    model:
      kind: finite
      rates: [[0, 0], [0, 0]]
      potential: {type: constant-vector, values: [800, 800]}
    params:
      t: 1.0
    output:
      directory: %s
    """ % tmp_path
    cfg = _write(tmp_path, text)
    assert main(["run", str(cfg)]) == 3
    assert "NumericError" in capsys.readouterr().err


def test_failed_check_exit_code(tmp_path):
    text = """\
    experiment: bias-sweep
    model: {builtin: m2}
    params: {t: 1.0, N_list: [3, 5], replicas: 50, seed: 1}
    output: {directory: %s}
    """ % tmp_path
    assert main(["run", str(_write(tmp_path, text))]) == 1


def test_finite_only_experiments(tmp_path, capsys):
    text = """\
    experiment: duality
    model: {builtin: torus1d}
    params: {N: 3, t: 1.0, replicas: 100, seed: 1}
    """
    assert main(["validate", str(_write(tmp_path, text))]) == 2
    assert "finite-state" in capsys.readouterr().err


def test_models_listing(capsys):
    assert main(["models"]) == 0
    out = capsys.readouterr().out
    assert "m2" in out and "ring4" in out and "jarzynski2" in out and "torus1d" in out
    assert out.count("potential_sup:") == len(CATALOG)
    assert main(["models", "--json"]) == 0
    entries = json.loads(capsys.readouterr().out)
    assert {e["name"] for e in entries} == set(CATALOG)


def test_catalog_round_trip():
    for entry in list_builtin_models():
        assert entry["potential_sup"] >= 0
        frag = yaml.safe_load(yaml.safe_dump(entry["fragment"]))
        bundle = load_model(frag)
        assert bundle.model.potential_sup == entry["potential_sup"]
    assert load_model({"builtin": "m2"}).model.name == "m2"


def test_catalog_errors():
    with pytest.raises(ModelSpecError) as info:
        load_model({"kind": "finite", "rates": [[1, -1], [2, -2]],
                    "potential": {"type": "constant-vector", "values": [0, 1]}})
    assert info.value.path == "model.rates"
    with pytest.raises(ModelSpecError):
        load_model({"kind": "wormhole"})


def test_shipped_configs_validate(capsys):
    from pathlib import Path

    configs = sorted((Path(__file__).parents[1] / "configs").glob("*.yaml"))
    assert len(configs) >= 9
    for cfg in configs:
        assert main(["validate", str(cfg)]) == 0, cfg
