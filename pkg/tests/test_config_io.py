from pathlib import Path

import numpy as np
import pytest

from robinconv.config import load_config, parse_config
from robinconv.errors import ConfigError
from robinconv.io import (
    OUTPUT_DIR_ENV,
    FieldFileError,
    RunLog,
    RunLogRecord,
    exclusive_output_dir,
    parse_log_line,
    read_field_csv,
    read_trace_csv,
    resolve_output_dir,
    write_field_csv,
    write_trace_csv,
)
from robinconv.mesh import build_interval_mesh, build_rectangle_mesh
from robinconv.solver import TraceRecord

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

MINIMAL = """
mesh.kind = interval
problem.p = 2
reaction.name = zero
"""


def test_minimal_config_fills_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.mesh.n == 64 and cfg.mesh.a == 0 and cfg.mesh.b == 1
    assert cfg.problem.beta == 1.0
    assert cfg.schedule.steps == 21 and cfg.schedule.ratio == 0.5
    assert cfg.output.directory == Path("out")


@pytest.mark.parametrize("name", ["example_p2.cfg", "example_p3.cfg", "neumann.cfg",
                                  "zero_reaction.cfg"])
def test_shipped_configs_load(name):
    cfg = load_config(CONFIGS / name)
    assert cfg.problem.p > 1


def test_comments_and_whitespace():
    cfg = parse_config("# header\n\n  mesh.kind=interval  # trailing\nproblem.p = 3\n"
                       "reaction.name = zero\nmesh.n = 1e2\n")
    assert cfg.problem.p == 3.0 and cfg.mesh.n == 100


@pytest.mark.parametrize("extra,message", [
    ("problem.p = 1", "p must exceed 1"),
    ("schedule.ratio = 1.5", "schedule.ratio must lie in (0, 1)"),
    ("problem.beta = -1", "beta must be nonnegative"),
    ("mesh.n = 0", "mesh.n must be at least 1"),
])
def test_validation_messages(extra, message):
    text = MINIMAL.replace("problem.p = 2\n", "") if extra.startswith("problem.p") else MINIMAL
    with pytest.raises(ConfigError, match=message.replace("(", r"\(").replace(")", r"\)")):
        parse_config(text + extra + "\n")


def test_example_parameter_order_is_checked():
    text = MINIMAL.replace("zero", "example") + \
        "reaction.eta = 3\nreaction.theta = 0.5\nreaction.q = 2.5\nreaction.tau = 1.5\nreaction.r = 3\n"
    with pytest.raises(ConfigError, match="tau, q < p < r"):
        parse_config(text)


def test_unknown_key_reports_line():
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + "mesh.colour = red\n")
    assert info.value.line == 5 and info.value.field == "mesh.colour"


def test_unknown_section_and_excluded_key():
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config(MINIMAL + "plot.dpi = 300\n")
    with pytest.raises(ConfigError, match="unknown key"):
        parse_config(MINIMAL + "schedule.explicit = 1\n")


def test_duplicate_key_reports_both_lines():
    with pytest.raises(ConfigError, match="already set on line 3") as info:
        parse_config(MINIMAL + "problem.p = 3\n")
    assert info.value.line == 5


@pytest.mark.parametrize("line", ["just words", "mesh.kind =", "a.b.c = 1"])
def test_malformed_lines(line):
    with pytest.raises(ConfigError) as info:
        parse_config(MINIMAL + line + "\n")
    assert info.value.line == 5


def test_bad_value_and_missing_field():
    with pytest.raises(ConfigError, match="bad value for mesh.n"):
        parse_config(MINIMAL + "mesh.n = 2.5\n")
    with pytest.raises(ConfigError, match="missing required field reaction.name"):
        parse_config("mesh.kind = interval\nproblem.p = 2\n")


def test_beta_file_resolves_against_config_dir(tmp_path):
    (tmp_path / "beta.csv").write_text("node_id,x,beta\n")
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text(MINIMAL + "problem.beta = beta.csv\n")
    cfg = load_config(cfg_path)
    assert cfg.problem.beta == tmp_path / "beta.csv"
    cfg_path.write_text(MINIMAL + "problem.beta = missing.csv\n")
    with pytest.raises(ConfigError, match="does not exist"):
        load_config(cfg_path)


def test_unreadable_config(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "nope.cfg")


# --------------------------------------------------------------- field csv

@pytest.mark.parametrize("mesh", [build_interval_mesh(0, 1, 17), build_rectangle_mesh(2, 1, 5, 3)],
                         ids=["1d", "2d"])
def test_field_round_trip_is_bitwise(mesh, tmp_path):
    rng = np.random.default_rng(0)
    u = rng.standard_normal(mesh.n_nodes) * 10.0 ** rng.integers(-300, 300, mesh.n_nodes)
    write_field_csv(tmp_path / "u.csv", mesh, u)
    np.testing.assert_array_equal(read_field_csv(tmp_path / "u.csv", mesh), u)
    header = (tmp_path / "u.csv").read_text().splitlines()[0]
    assert header == ("node_id,x,u" if mesh.dim == 1 else "node_id,x,y,u")


def test_field_errors(tmp_path):
    m = build_interval_mesh(0, 1, 4)
    write_field_csv(tmp_path / "u.csv", m, np.ones(m.n_nodes))
    with pytest.raises(FieldFileError):
        read_field_csv(tmp_path / "u.csv", build_interval_mesh(0, 1, 5))
    (tmp_path / "empty.csv").write_text("")
    with pytest.raises(FieldFileError):
        read_field_csv(tmp_path / "empty.csv", m)
    (tmp_path / "bad.csv").write_text("a,b,c\n0,0,1\n")
    with pytest.raises(FieldFileError):
        read_field_csv(tmp_path / "bad.csv", m)


def test_trace_round_trip(tmp_path):
    recs = [TraceRecord(0, 1.0, 1e-11, 0.3, 0.9, 1.7, 0.0, "HEALTHY"),
            TraceRecord(1, 0.5, 2e-12, 0.2, 0.8, 1.6, 1 / 3, "COLLAPSE-SUSPECTED")]
    write_trace_csv(tmp_path / "t.csv", recs)
    back = read_trace_csv(tmp_path / "t.csv")
    assert back[1]["picone_integral"] == 1 / 3
    assert back[1]["collapse_flag"] == "COLLAPSE-SUSPECTED"
    assert [r["step"] for r in back] == [0, 1]


def test_log_records_parse_back(tmp_path):
    rec = RunLogRecord("solve", "it's a message = with spaces", epsilon=0.25, residual=1e-11,
                       verdict="HEALTHY")
    with RunLog(tmp_path / "run.log") as log:
        log.write(rec)
        log.write(RunLogRecord("done"))
    lines = (tmp_path / "run.log").read_text().splitlines()
    first = parse_log_line(lines[0])
    assert first["phase"] == "solve" and first["message"] == rec.message
    assert float(first["epsilon"]) == 0.25 and first["verdict"] == "HEALTHY"
    assert "min_u" not in first
    assert parse_log_line(lines[1])["phase"] == "done"
    with pytest.raises(FieldFileError):
        parse_log_line("phase=x orphan")


def test_output_dir_precedence(monkeypatch):
    monkeypatch.delenv(OUTPUT_DIR_ENV, raising=False)
    assert resolve_output_dir("cfg") == Path("cfg")
    monkeypatch.setenv(OUTPUT_DIR_ENV, "env")
    assert resolve_output_dir("cfg") == Path("env")
    assert resolve_output_dir("cfg", "cli") == Path("cli")


def test_output_dir_lock(tmp_path):
    target = tmp_path / "a" / "b"
    with exclusive_output_dir(target):
        assert (target / ".lock").exists()
        with pytest.raises(ConfigError, match="in use"):
            with exclusive_output_dir(target):
                pass
    assert not (target / ".lock").exists()
