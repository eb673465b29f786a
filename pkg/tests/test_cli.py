import pytest
from hypothesis import given, strategies as st

from elasticflow.assembly import BoundarySpec
from elasticflow.cli import (EXIT_CONFIG, EXIT_NUMERIC, EXIT_OK, OUTPUT_ENV, ConfigError, ExperimentConfig,
                             bundled_configs, main)
from elasticflow.saddle import SolverBreakdown

SMALL_RUN = """
[experiment]
flow = forced_helix
modes = P2
levels = 6
taus = 0.01
T = 0.05
stride = 2
output = {out}
"""


@given(st.sampled_from(["circle", "helix", "forced_helix"]),
       st.lists(st.sampled_from(["P1", "P2"]), min_size=1, max_size=2, unique=True),
       st.lists(st.integers(1, 512), min_size=1, max_size=5),
       st.integers(1, 1000), st.integers(1, 50),
       st.one_of(st.none(), st.builds(BoundarySpec,
                                      st.sampled_from([(), ("a",), ("a", "b")]),
                                      st.sampled_from([(), ("b",), ("a", "b")]))))
def test_config_round_trip(flow, modes, levels, steps, stride, bc):
    tau = 1.0 / steps
    cfg = ExperimentConfig(flow, tuple(modes), tuple(levels), (tau,), T=steps * tau,
                           stride=stride, output="out/x", boundary=bc)
    text = cfg.to_string()
    again = ExperimentConfig.from_string(text)
    assert again == cfg
    assert again.to_string() == text


@pytest.mark.parametrize("text", [
    "[experiment]\nflow = spiral\n",
    "[experiment]\nflow = circle\nmodes = P3\n",
    "[experiment]\nflow = circle\nlevels = 0\n",
    "[experiment]\nflow = circle\ntaus = 0.3\nT = 1\n",
    "[experiment]\nflow = circle\ncolour = red\n",
    "[experiment]\nmodes = P1\n",
    "[boundary]\nposition = a\n",
    "not an ini file",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.from_string(text)


def test_bundled_configs_parse():
    names = bundled_configs()
    assert {"circle.cfg", "helix.cfg", "forced_helix.cfg"} <= set(names)
    for name in names:
        ExperimentConfig.load(name)


def test_run_writes_outputs_deterministically(tmp_path, capsys):
    cfg = tmp_path / "small.cfg"
    outputs = []
    for i in range(2):
        out = tmp_path / f"out{i}"
        cfg.write_text(SMALL_RUN.format(out=out))
        assert main(["run", str(cfg)]) == EXIT_OK
        outputs.append(out)
    text = capsys.readouterr().out
    assert "final energy" in text and "max constraint violation" in text
    a, b = outputs
    assert (a / "reports.csv").read_bytes() == (b / "reports.csv").read_bytes()
    snaps = sorted(p.name for p in (a / "snapshots").iterdir())
    assert snaps == ["snapshot_000000.csv", "snapshot_000002.csv", "snapshot_000004.csv",
                     "snapshot_000005.csv"]
    for name in snaps:
        assert (a / "snapshots" / name).read_bytes() == (b / "snapshots" / name).read_bytes()
    rows = (a / "reports.csv").read_text().splitlines()
    assert len(rows) == 6


def test_output_env_override(tmp_path, monkeypatch):
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_RUN.format(out=tmp_path / "ignored"))
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path / "env"))
    assert main(["run", str(cfg)]) == EXIT_OK
    assert (tmp_path / "env" / "reports.csv").exists()
    assert not (tmp_path / "ignored").exists()


def test_convergence_command(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV, str(tmp_path))
    cfg = tmp_path / "conv.cfg"
    cfg.write_text("[experiment]\nflow = circle\nmodes = P1, P2\nlevels = 4, 8\n"
                   "taus = 0.1\nT = 0.2\n")
    assert main(["convergence", str(cfg)]) == EXIT_OK
    for norm in ("LinfH2", "H1L2", "LinfH1", "LinfL2"):
        assert (tmp_path / f"table_{norm}.csv").exists()
    assert "eoc" in capsys.readouterr().out


def test_usage_errors(tmp_path, capsys):
    cfg = tmp_path / "one.cfg"
    cfg.write_text("[experiment]\nflow = circle\nlevels = 8\ntaus = 0.1\nT = 0.2\n")
    assert main(["convergence", str(cfg)]) == EXIT_CONFIG
    cfg.write_text("[experiment]\nflow = circle\nlevels = 8, 16\ntaus = 0.1\nT = 0.2\n")
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert main(["run", str(tmp_path / "missing.cfg")]) == EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_numeric_failure_exit_code(tmp_path, monkeypatch, capsys):
    import elasticflow.flow

    def breakdown(*args, **kwargs):
        raise SolverBreakdown("singular pivot")

    monkeypatch.setattr(elasticflow.flow, "solve_kkt", breakdown)
    cfg = tmp_path / "small.cfg"
    cfg.write_text(SMALL_RUN.format(out=tmp_path / "out"))
    assert main(["run", str(cfg)]) == EXIT_NUMERIC
    assert "numerical failure" in capsys.readouterr().err


def test_flows_command(capsys):
    assert main(["flows"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "forced_helix" in out and "circle.cfg" in out


def test_bundled_run_configs(tmp_path, monkeypatch):
    import numpy as np
    from elasticflow.flow import run
    from elasticflow.hermite import evaluate

    results = {}
    for name in ("circle.cfg", "helix.cfg", "forced_helix.cfg"):
        cfg = ExperimentConfig.load(name)
        results[name] = (cfg, run(cfg.flow_config()))
    cfg, res = results["circle.cfg"]
    assert cfg.levels == (64,) and cfg.taus == (0.1,) and cfg.T == 50.0
    assert len(res.reports) == 500
    assert res.reports[-1].constraint_violation <= 1e-8
    _, res = results["helix.cfg"]
    E0 = res.initial_energy
    assert max(abs(r.energy - E0) for r in res.reports) <= 1e-8 * E0
    cfg, res = results["forced_helix.cfg"]
    flow = cfg.flow_config().flow
    ends = np.array([flow.a, flow.b])
    assert cfg.T == 1.0
    assert np.max(np.abs(evaluate(res.final, ends) - flow.z(ends, cfg.T))) <= 1e-9
