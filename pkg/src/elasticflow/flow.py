"""Linearised semi-implicit time stepping for the constrained elastic flow.

Each step solves for the discrete velocity dZ in

    (dZ, Y) + tau (dZ_xx, Y_xx) = -(Z_xx, Y_xx)   for all admissible Y,

subject to dZ_x(x~) . Z_x(x~) = 0 at the constraint nodes and the boundary
conditions, and then sets Z <- Z + tau dZ.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .assembly import (BoundarySpec, ConstraintMatrix, ConstraintMode, boundary_rows,
                       constraint_matrix, forced_load, mass_matrix, stack_constraints,
                       stiffness_matrix)
from .forcing import AnalyticFlow, forced_terms
from .hermite import CurveState, evaluate, seminorm_sq
from .interpolate import interp_j3
from .mesh import Dissection, nodes_p1, nodes_p2
from .saddle import METHODS, SaddleSystem, solve_kkt

log = logging.getLogger(__name__)

REPORT_COLUMNS = ("n", "t", "energy", "dissipation_l2", "dissipation_h2",
                  "constraint_violation", "kkt_residual")


@dataclass
class FlowConfig:
    dissection: Dissection
    flow: AnalyticFlow
    tau: float
    T: float
    mode: ConstraintMode = ConstraintMode.P2
    boundary: Optional[BoundarySpec] = None
    forcing: Optional[bool] = None
    stride: int = 10
    solver: str = "auto"

    def __post_init__(self):
        self.mode = ConstraintMode.parse(self.mode)
        if self.solver not in METHODS:
            raise ValueError(f"unknown solver {self.solver!r}; choose from {METHODS}")
        if self.boundary is None:
            self.boundary = self.flow.boundary
        if self.forcing is None:
            self.forcing = self.flow.forced
        if not self.tau > 0:
            raise ValueError(f"time step must be positive, got {self.tau}")
        if self.T < self.tau:
            raise ValueError(f"final time {self.T} is shorter than one step {self.tau}")
        if self.stride < 1:
            raise ValueError("snapshot stride must be >= 1")
        n = round(self.T / self.tau)
        if abs(n * self.tau - self.T) > 1e-12 * max(1.0, abs(self.T)):
            raise ValueError(f"T={self.T} is not an integer multiple of tau={self.tau}")
        d = self.dissection
        if not (np.isclose(d.a, self.flow.a, rtol=0, atol=1e-12)
                and np.isclose(d.b, self.flow.b, rtol=0, atol=1e-12)):
            raise ValueError(f"dissection [{d.a}, {d.b}] does not match the parameter "
                             f"interval [{self.flow.a}, {self.flow.b}] of {self.flow.name}")

    @property
    def dim(self) -> int:
        return self.flow.dim

    @property
    def num_steps(self) -> int:
        return round(self.T / self.tau)

    def time(self, n: int) -> float:
        return n * self.tau

    def constraint_nodes(self) -> np.ndarray:
        d = self.dissection
        return nodes_p2(d) if self.mode is ConstraintMode.P2 else nodes_p1(d)


@dataclass
class StepReport:
    n: int
    t: float
    energy: float
    dissipation_l2: float
    dissipation_h2: float
    constraint_violation: float
    kkt_residual: float
    warnings: list = field(default_factory=list)

    def row(self) -> list:
        return [self.n, self.t, self.energy, self.dissipation_l2, self.dissipation_h2,
                self.constraint_violation, self.kkt_residual]


def constraint_violation(Z: CurveState, points) -> float:
    """max over the given nodes of | |Z_x|^2 - 1 |."""
    zx = evaluate(Z, np.asarray(points), 1)
    return float(np.max(np.abs(np.sum(zx**2, axis=1) - 1.0)))


def init_state(cfg: FlowConfig) -> CurveState:
    """Z^0 = J_{h,3} z_0, after checking |z_0'| = 1 on the constraint nodes."""
    flow = cfg.flow
    pts = cfg.constraint_nodes()
    speed = np.sum(flow.z_x(pts, 0.0) ** 2, axis=1)
    worst = np.max(np.abs(speed - 1.0))
    if worst > 1e-8:
        i = int(np.argmax(np.abs(speed - 1.0)))
        raise ValueError(f"initial curve is not parametrised by arc length: "
                         f"|z0'(x)|^2 = {speed[i]:.12g} at x = {pts[i]:.6g}")
    return interp_j3(partial(flow.z, t=0.0), partial(flow.z_x, t=0.0), cfg.dissection)


class Stepper:
    """Holds the step-independent matrices of one run."""

    def __init__(self, cfg: FlowConfig):
        self.cfg = cfg
        d, dim = cfg.dissection, cfg.dim
        self.M = mass_matrix(d, dim)
        self.S = stiffness_matrix(d, dim)
        self.A = (self.M + cfg.tau * self.S).tocsr()
        self.points = cfg.constraint_nodes()
        bc = cfg.boundary
        # arc-length rows at endpoints with a prescribed (or periodic) slope are
        # implied by the boundary rows and would make B rank deficient
        M = d.num_elements
        skip = {f"arc@x{0 if end == 'a' else M}" for end in bc.slope}
        if bc.periodic:
            skip.add(f"arc@x{M}")
        self._skip = skip
        keep = np.ones(len(self.points), dtype=bool)
        keep[0] = "arc@x0" not in skip
        keep[-1] = f"arc@x{M}" not in skip
        # nodes where the linearised arc-length condition is actually imposed
        self.arc_points = self.points[keep]
        self._static_bc = None if cfg.forcing else boundary_rows(bc, d, dim)

    def constraints(self, Z: CurveState, n: int) -> ConstraintMatrix:
        cfg = self.cfg
        arc = constraint_matrix(Z, cfg.mode)
        keep = [i for i, lab in enumerate(arc.labels) if lab not in self._skip]
        arc = arc.select(keep)
        if self._static_bc is not None:
            bnd = self._static_bc
        else:
            bnd = boundary_rows(cfg.boundary, cfg.dissection, cfg.dim, tau=cfg.tau,
                                data=cfg.flow, t=cfg.time(n))
        return stack_constraints(arc, bnd)

    def rhs(self, Z: CurveState, n: int) -> np.ndarray:
        cfg = self.cfg
        if not cfg.forcing:
            return -(self.S @ Z.coeffs)
        U, V, W = forced_terms(cfg.flow, cfg.dissection, cfg.time(n + 1))
        return forced_load(Z, U, V, W, self.M, self.S)

    def step(self, Z: CurveState, n: int):
        """Advance Z^n to Z^{n+1}; returns (Z^{n+1}, dZ^{n+1}, report)."""
        cfg = self.cfg
        B = self.constraints(Z, n)
        sol = solve_kkt(SaddleSystem(self.A, B, self.rhs(Z, n)), method=cfg.solver,
                        dofs_per_node=2 * cfg.dim)
        for w in sol.warnings:
            log.warning("step %d: %s", n + 1, w)
        dZ = Z.with_coeffs(sol.x)
        Znew = Z.with_coeffs(Z.coeffs + cfg.tau * sol.x)
        report = StepReport(
            n=n + 1,
            t=cfg.time(n + 1),
            energy=0.5 * float(Znew.coeffs @ (self.S @ Znew.coeffs)),
            dissipation_l2=float(sol.x @ (self.M @ sol.x)),
            dissipation_h2=cfg.tau * float(sol.x @ (self.S @ sol.x)),
            constraint_violation=constraint_violation(Znew, self.points),
            kkt_residual=sol.residual,
            warnings=sol.warnings,
        )
        return Znew, dZ, report


def step(Z: CurveState, cfg: FlowConfig, n: int):
    """One step of the scheme from Z = Z^n; returns (Z^{n+1}, report)."""
    Znew, _, report = Stepper(cfg).step(Z, n)
    return Znew, report


@dataclass
class RunResult:
    initial: CurveState
    final: CurveState
    snapshots: list  # (n, CurveState)
    reports: list

    @property
    def initial_energy(self) -> float:
        return 0.5 * seminorm_sq(self.initial, 2)


Observer = Callable[[int, CurveState, Optional[CurveState]], None]


def run(cfg: FlowConfig, observer: Optional[Observer] = None,
        keep_all: bool = False) -> RunResult:
    """Run all N steps.

    Snapshots are kept every ``cfg.stride`` steps (every step with
    ``keep_all``) plus the final state. ``observer(n, Z^n, dZ^n)`` is called for
    n = 0..N with dZ^0 = None.
    """
    stepper = Stepper(cfg)
    Z = init_state(cfg)
    stride = 1 if keep_all else cfg.stride
    snapshots = [(0, Z)]
    reports = []
    if observer is not None:
        observer(0, Z, None)
    N = cfg.num_steps
    for n in range(N):
        Z, dZ, report = stepper.step(Z, n)
        reports.append(report)
        if observer is not None:
            observer(n + 1, Z, dZ)
        if (n + 1) % stride == 0 or n + 1 == N:
            snapshots.append((n + 1, Z))
    return RunResult(snapshots[0][1], Z, snapshots, reports)


def write_reports(reports, path) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(REPORT_COLUMNS)
        for r in reports:
            n, *rest = r.row()
            writer.writerow([n] + [f"{v:.17g}" for v in rest])
    return path
