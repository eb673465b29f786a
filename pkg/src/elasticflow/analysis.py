"""Error norms against exact flows, EOCs and convergence sweeps."""
from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path

import numpy as np

from .assembly import (BoundarySpec, ConstraintMode, gradient_matrix, mass_matrix,
                       stiffness_matrix)
from .flow import FlowConfig, run
from .forcing import AnalyticFlow
from .hermite import CurveState
from .interpolate import interp_hermite
from .mesh import Dissection, uniform_dissection

log = logging.getLogger(__name__)

NORMS = ("LinfH2", "H1L2", "LinfH1", "LinfL2")


def exact_interpolant(flow: AnalyticFlow, d: Dissection, t: float) -> CurveState:
    """I_{h,3} z(t)."""
    return interp_hermite(partial(flow.z, t=t), partial(flow.z_x, t=t), d)


def rate_interpolant(flow: AnalyticFlow, d: Dissection, t: float) -> CurveState:
    """I_{h,3} z_t(t)."""
    return interp_hermite(partial(flow.z_t, t=t), partial(flow.z_tx, t=t), d)


# relative size below which |z|^2 - |I z|^2 is indistinguishable from rounding
_ROUNDOFF = 64 * np.finfo(float).eps


def _h2_error_sq(exact_sq: float, Iz: np.ndarray, Z: np.ndarray, S) -> float:
    """|z|^2 + |Z|^2 - 2 (I z, Z) in H^2, evaluated as (|z|^2 - |I z|^2) + |I z - Z|^2.

    Both forms are equal; the second keeps the discrete part free of
    cancellation so that Z = I z gives zero.
    """
    interp = exact_sq - float(Iz @ (S @ Iz))
    if abs(interp) <= _ROUNDOFF * abs(exact_sq):
        interp = 0.0
    e = Iz - Z
    return max(interp + float(e @ (S @ e)), 0.0)


def h2_error(flow: AnalyticFlow, t: float, Z: CurveState) -> float:
    """|z(t) - Z|_{H^2} without quadrature of z.

    The cross term uses the H^2-orthogonality of I_{h,3}, so only Hermite
    functions are integrated.
    """
    Iz = exact_interpolant(flow, Z.dissection, t)
    S = stiffness_matrix(Z.dissection, Z.dim)
    return math.sqrt(_h2_error_sq(flow.h2_seminorm_sq(t), Iz.coeffs, Z.coeffs, S))


def h1l2_error(flow: AnalyticFlow, rates, tau: float) -> float:
    """(tau * sum_n ||I_{h,3} z_t(t_n) - dZ^n||^2)^(1/2) for n = 1..N.

    ``rates`` is the sequence dZ^1, ..., dZ^N.
    """
    rates = list(rates)
    if not rates:
        return 0.0
    d, dim = rates[0].dissection, rates[0].dim
    M = mass_matrix(d, dim)
    total = 0.0
    for n, dZ in enumerate(rates, start=1):
        e = rate_interpolant(flow, d, n * tau).coeffs - dZ.coeffs
        total += float(e @ (M @ e))
    return math.sqrt(tau * total)


def weak_errors(flow: AnalyticFlow, trajectory, tau: float) -> tuple[float, float]:
    """(max_n ||I_{h,3} z(t_n) - Z^n||, max_n |I_{h,3} z(t_n) - Z^n|_{H^1}).

    ``trajectory`` yields Z^0, Z^1, ...
    """
    l2 = h1 = 0.0
    mats = None
    for n, Z in enumerate(trajectory):
        if mats is None:
            mats = (mass_matrix(Z.dissection, Z.dim), gradient_matrix(Z.dissection, Z.dim))
        e = exact_interpolant(flow, Z.dissection, n * tau).coeffs - Z.coeffs
        l2 = max(l2, math.sqrt(max(float(e @ (mats[0] @ e)), 0.0)))
        h1 = max(h1, math.sqrt(max(float(e @ (mats[1] @ e)), 0.0)))
    return l2, h1


@dataclass
class ErrorReport:
    e_LinfH2: float
    e_H1L2: float
    e_LinfH1: float
    e_LinfL2: float
    h: float
    tau: float
    mode: str
    M: int = 0

    def get(self, norm: str) -> float:
        return getattr(self, f"e_{norm}")


class ErrorAccumulator:
    """Observer for :func:`elasticflow.flow.run` that tracks all four norms."""

    def __init__(self, flow: AnalyticFlow, d: Dissection, tau: float):
        self.flow, self.d, self.tau = flow, d, tau
        self.M = mass_matrix(d, flow.dim)
        self.K = gradient_matrix(d, flow.dim)
        self.S = stiffness_matrix(d, flow.dim)
        self.linf_h2 = self.linf_h1 = self.linf_l2 = 0.0
        self._h1l2_sq = 0.0

    def __call__(self, n: int, Z: CurveState, dZ: CurveState | None):
        flow, t = self.flow, n * self.tau
        Iz = exact_interpolant(flow, self.d, t).coeffs
        sq = _h2_error_sq(flow.h2_seminorm_sq(t), Iz, Z.coeffs, self.S)
        self.linf_h2 = max(self.linf_h2, math.sqrt(sq))
        e = Iz - Z.coeffs
        self.linf_l2 = max(self.linf_l2, math.sqrt(max(float(e @ (self.M @ e)), 0.0)))
        self.linf_h1 = max(self.linf_h1, math.sqrt(max(float(e @ (self.K @ e)), 0.0)))
        if dZ is not None:
            et = rate_interpolant(flow, self.d, t).coeffs - dZ.coeffs
            self._h1l2_sq += self.tau * float(et @ (self.M @ et))

    def report(self, mode) -> ErrorReport:
        return ErrorReport(self.linf_h2, math.sqrt(self._h1l2_sq), self.linf_h1,
                           self.linf_l2, self.d.h_max, self.tau,
                           ConstraintMode.parse(mode).value, self.d.num_elements)


def run_with_errors(cfg: FlowConfig) -> ErrorReport:
    acc = ErrorAccumulator(cfg.flow, cfg.dissection, cfg.tau)
    run(cfg, observer=acc)
    return acc.report(cfg.mode)


def eoc(errors, hs) -> list:
    """Experimental orders between consecutive levels (first entry None)."""
    out = [None]
    for (e0, h0), (e1, h1) in zip(zip(errors, hs), zip(errors[1:], hs[1:])):
        if not (e0 > 0 and e1 > 0):
            out.append(float("nan"))
        elif h0 == 2 * h1:
            out.append(math.log2(e0 / e1))
        else:
            out.append(math.log(e0 / e1) / math.log(h0 / h1))
    return out


@dataclass
class ConvergenceTable:
    """Errors per (mode, tau) column and mesh level, for every norm."""

    levels: list
    hs: list
    columns: list  # (mode, tau)
    errors: dict = field(default_factory=dict)  # (mode, tau) -> list[ErrorReport | None]
    failures: list = field(default_factory=list)

    @property
    def complete(self) -> bool:
        return not self.failures and all(
            r is not None for col in self.errors.values() for r in col)

    def series(self, norm: str, mode, tau: float) -> list:
        col = self.errors[(ConstraintMode.parse(mode).value, tau)]
        return [float("nan") if r is None else r.get(norm) for r in col]

    def eocs(self, norm: str, mode, tau: float) -> list:
        return eoc(self.series(norm, mode, tau), self.hs)

    def rows(self, norm: str):
        header = ["h"]
        for mode, tau in self.columns:
            tag = f"{norm}_{mode}_{tau:g}"
            header += [f"err_{tag}", f"eoc_{tag}"]
        rows = [header]
        cols = [(self.series(norm, m, t), self.eocs(norm, m, t)) for m, t in self.columns]
        for i, h in enumerate(self.hs):
            row = [f"{h:.17g}"]
            for errs, rates in cols:
                row.append(f"{errs[i]:.17g}")
                row.append("" if rates[i] is None else f"{rates[i]:.17g}")
            rows.append(row)
        return rows

    def write_csv(self, norm: str, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows(norm))
        return path

    def summary(self, norms=NORMS) -> str:
        lines = []
        for norm in norms:
            for mode, tau in self.columns:
                rates = self.eocs(norm, mode, tau)[1:]
                txt = " ".join("nan" if r is None or not np.isfinite(r) else f"{r:.2f}"
                               for r in rates)
                lines.append(f"{norm:7s} {mode} tau={tau:g}: eoc {txt}")
        return "\n".join(lines)


def _study_job(flow, M, tau, T, mode, boundary):
    d = uniform_dissection(flow.a, flow.b, M)
    cfg = FlowConfig(d, flow, tau, T, mode, boundary=boundary)
    return run_with_errors(cfg)


def convergence_study(flow: AnalyticFlow, levels, taus, modes, T: float,
                      boundary: BoundarySpec | None = None,
                      workers: int = 1) -> ConvergenceTable:
    """Run every (mode, tau, level) combination and collect the error norms.

    A failing run stops the sweep; the table then carries the failure in
    ``failures`` and ``None`` for runs that did not finish.
    """
    levels = [int(m) for m in levels]
    if len(levels) < 2:
        raise ValueError("a convergence study needs at least two mesh levels")
    modes = [ConstraintMode.parse(m).value for m in modes]
    taus = [float(t) for t in taus]
    hs = [(flow.b - flow.a) / m for m in levels]
    columns = [(m, t) for m in modes for t in taus]
    table = ConvergenceTable(levels, hs, columns,
                             {c: [None] * len(levels) for c in columns})
    jobs = [(c, i) for c in columns for i in range(len(levels))]

    def args(job):
        (mode, tau), i = job
        return (flow, levels[i], tau, T, mode, boundary)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [(job, pool.submit(_study_job, *args(job))) for job in jobs]
            for job, fut in futures:
                try:
                    table.errors[job[0]][job[1]] = fut.result()
                except Exception as exc:  # noqa: BLE001 - recorded in the table
                    table.failures.append((job, repr(exc)))
    else:
        for job in jobs:
            try:
                table.errors[job[0]][job[1]] = _study_job(*args(job))
            except Exception as exc:  # noqa: BLE001 - recorded in the table
                log.error("run %s failed: %s", job, exc)
                table.failures.append((job, repr(exc)))
                break
    return table
