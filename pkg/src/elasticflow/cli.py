"""Command-line driver: ``elasticflow run|convergence|flows``.

Experiments are described by INI files with an ``[experiment]`` section and an
optional ``[boundary]`` section::

    [experiment]
    flow = circle
    modes = P2
    levels = 64
    taus = 0.1
    T = 50
    stride = 10
    output = out/circle

    [boundary]
    position = a
    slope = a, b
    periodic = false

``run`` needs exactly one mode, level and step size; ``convergence`` takes
lists and at least two levels. The environment variable ELASTICFLOW_OUTPUT_DIR
overrides ``output``.
"""
from __future__ import annotations

import argparse
import configparser
import io
import logging
import os
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from .analysis import NORMS, ErrorAccumulator, convergence_study
from .assembly import BoundarySpec, ConstraintMode
from .flow import FlowConfig, run, write_reports
from .forcing import FLOWS, get_flow
from .hermite import write_snapshot
from .mesh import uniform_dissection
from .saddle import METHODS, KKTError


OUTPUT_ENV = "ELASTICFLOW_OUTPUT_DIR"
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2


class ConfigError(ValueError):
    pass


def _split(value: str) -> list:
    return [v for v in (s.strip() for s in value.replace(",", " ").split()) if v]


@dataclass
class ExperimentConfig:
    flow: str
    modes: tuple = ("P2",)
    levels: tuple = (64,)
    taus: tuple = (0.1,)
    T: float = 1.0
    stride: int = 10
    output: str = "out"
    boundary: Optional[BoundarySpec] = None
    workers: int = 1
    solver: str = "auto"

    def __post_init__(self):
        if self.flow not in FLOWS:
            raise ConfigError(f"unknown flow {self.flow!r}; available: {', '.join(FLOWS)}")
        try:
            self.modes = tuple(ConstraintMode.parse(m).value for m in self.modes)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        self.levels = tuple(int(m) for m in self.levels)
        self.taus = tuple(float(t) for t in self.taus)
        self.T = float(self.T)
        if not self.modes or not self.levels or not self.taus:
            raise ConfigError("modes, levels and taus must not be empty")
        if any(m < 1 for m in self.levels):
            raise ConfigError(f"mesh levels must be positive, got {self.levels}")
        if any(not t > 0 for t in self.taus) or not self.T > 0:
            raise ConfigError("time step sizes and T must be positive")
        for tau in self.taus:
            n = round(self.T / tau)
            if n < 1 or abs(n * tau - self.T) > 1e-12 * max(1.0, self.T):
                raise ConfigError(f"T={self.T:g} is not a multiple of tau={tau:g}")
        if self.stride < 1 or self.workers < 1:
            raise ConfigError("stride and workers must be >= 1")
        if self.solver not in METHODS:
            raise ConfigError(f"unknown solver {self.solver!r}; choose from {METHODS}")

    @classmethod
    def from_parser(cls, cp: configparser.ConfigParser) -> "ExperimentConfig":
        if not cp.has_section("experiment"):
            raise ConfigError("missing [experiment] section")
        sec = cp["experiment"]
        known = {"flow", "modes", "levels", "taus", "t", "stride", "output", "workers",
                 "solver"}
        unknown = set(sec) - known
        if unknown:
            raise ConfigError(f"unknown keys in [experiment]: {', '.join(sorted(unknown))}")
        if "flow" not in sec:
            raise ConfigError("[experiment] needs a 'flow' key")
        try:
            kwargs = dict(
                flow=sec["flow"].strip(),
                modes=tuple(_split(sec.get("modes", "P2"))),
                levels=tuple(int(v) for v in _split(sec.get("levels", "64"))),
                taus=tuple(float(v) for v in _split(sec.get("taus", "0.1"))),
                T=sec.getfloat("T", 1.0),
                stride=sec.getint("stride", 10),
                output=sec.get("output", "out").strip(),
                workers=sec.getint("workers", 1),
                solver=sec.get("solver", "auto").strip(),
            )
            if cp.has_section("boundary"):
                b = cp["boundary"]
                unknown = set(b) - {"position", "slope", "periodic"}
                if unknown:
                    raise ConfigError(f"unknown keys in [boundary]: {', '.join(sorted(unknown))}")
                kwargs["boundary"] = BoundarySpec(tuple(_split(b.get("position", ""))),
                                                  tuple(_split(b.get("slope", ""))),
                                                  b.getboolean("periodic", False))
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return cls(**kwargs)

    @classmethod
    def from_string(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser()
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        return cls.from_parser(cp)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        path = resolve_config(path)
        return cls.from_string(path.read_text())

    def to_string(self) -> str:
        cp = configparser.ConfigParser()
        cp["experiment"] = {
            "flow": self.flow,
            "modes": ", ".join(self.modes),
            "levels": ", ".join(str(m) for m in self.levels),
            "taus": ", ".join(repr(t) for t in self.taus),
            "T": repr(self.T),
            "stride": str(self.stride),
            "output": self.output,
            "workers": str(self.workers),
            "solver": self.solver,
        }
        if self.boundary is not None:
            cp["boundary"] = {
                "position": ", ".join(self.boundary.position),
                "slope": ", ".join(self.boundary.slope),
                "periodic": str(self.boundary.periodic).lower(),
            }
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    def output_dir(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output)

    def flow_config(self, mode=None, M=None, tau=None) -> FlowConfig:
        flow = get_flow(self.flow)
        d = uniform_dissection(flow.a, flow.b, M or self.levels[0])
        return FlowConfig(d, flow, tau or self.taus[0], self.T, mode or self.modes[0],
                          boundary=self.boundary, stride=self.stride, solver=self.solver)


def bundled_configs() -> list:
    root = resources.files("elasticflow") / "configs"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".cfg"))


def resolve_config(path) -> Path:
    """A config path, falling back to the configs shipped with the package."""
    p = Path(path)
    if p.is_file():
        return p
    bundled = resources.files("elasticflow") / "configs" / p.name
    if bundled.is_file():
        return Path(str(bundled))
    raise ConfigError(f"config file not found: {path}")


def cmd_run(cfg: ExperimentConfig) -> int:
    if len(cfg.modes) != 1 or len(cfg.levels) != 1 or len(cfg.taus) != 1:
        raise ConfigError("'run' needs exactly one mode, one level and one tau")
    try:
        fc = cfg.flow_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    out = cfg.output_dir()
    snap_dir = out / "snapshots"
    snap_dir.mkdir(parents=True, exist_ok=True)
    errors = ErrorAccumulator(fc.flow, fc.dissection, fc.tau)
    result = run(fc, observer=errors)
    write_reports(result.reports, out / "reports.csv")
    for n, Z in result.snapshots:
        write_snapshot(Z, snap_dir / f"snapshot_{n:06d}.csv")
    (out / "config.cfg").write_text(cfg.to_string())
    last = result.reports[-1]
    print(f"flow {cfg.flow}, mode {fc.mode.value}, M={fc.dissection.num_elements}, "
          f"tau={fc.tau:g}, {fc.num_steps} steps")
    print(f"initial energy     {result.initial_energy:.12g}")
    print(f"final energy       {last.energy:.12g}")
    print(f"max constraint violation {max(r.constraint_violation for r in result.reports):.3e}")
    rep = errors.report(fc.mode)
    print("errors vs exact flow: " + ", ".join(f"{n} {rep.get(n):.3e}" for n in NORMS))
    print(f"output written to {out}")
    return EXIT_OK


def cmd_convergence(cfg: ExperimentConfig) -> int:
    if len(cfg.levels) < 2:
        raise ConfigError("'convergence' needs at least two mesh levels")
    flow = get_flow(cfg.flow)
    table = convergence_study(flow, cfg.levels, cfg.taus, cfg.modes, cfg.T,
                              boundary=cfg.boundary, workers=cfg.workers)
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    for norm in NORMS:
        table.write_csv(norm, out / f"table_{norm}.csv")
    (out / "config.cfg").write_text(cfg.to_string())
    print(table.summary())
    print(f"tables written to {out}")
    if table.failures:
        for job, msg in table.failures:
            print(f"failed run {job}: {msg}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def cmd_flows() -> int:
    for name in FLOWS:
        f = get_flow(name)
        kind = "forced" if f.forced else ("stationary" if f.stationary else "free")
        bc = f.boundary
        print(f"{name:14s} dim={f.dim} I=[{f.a:g}, {f.b:.6g}] {kind}; "
              f"position at {','.join(bc.position) or '-'}, slope at {','.join(bc.slope) or '-'}")
    print("bundled configs: " + ", ".join(bundled_configs()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elasticflow",
                                     description="Elastic flow of inextensible curves.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log every warning")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run one flow and write reports and snapshots"),
                       ("convergence", "run a mesh refinement study and write EOC tables")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="INI file (or the name of a bundled config)")
    sub.add_parser("flows", help="list the built-in flows and bundled configs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "flows":
        return cmd_flows()
    try:
        cfg = ExperimentConfig.load(args.config)
        with np.errstate(divide="raise", invalid="raise", over="raise"):
            if args.command == "run":
                return cmd_run(cfg)
            return cmd_convergence(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (KKTError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
