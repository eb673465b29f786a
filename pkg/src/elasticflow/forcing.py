"""Analytic reference flows and the manufactured right-hand side.

A flow is given by closed-form callables ``f(x, t)`` that accept an array of
parameter values x and return an array of shape (len(x), dim).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import partial
from typing import Callable, Optional

import numpy as np
from scipy import integrate

from .assembly import BoundarySpec
from .hermite import CurveState
from .interpolate import interp_hermite
from .mesh import Dissection

Field = Callable[[np.ndarray, float], np.ndarray]


@dataclass(frozen=True, eq=False)
class AnalyticFlow:
    name: str
    dim: int
    a: float
    b: float
    z: Field
    z_x: Field
    z_xx: Field
    z_xxx: Field
    z_t: Field
    z_tx: Field
    z_xxxx: Optional[Field] = None
    # closed form of the tail integral of z_t from x to b, if known
    tail: Optional[Field] = None
    # closed form of |z(t)|_{H^2}^2, if known
    h2_sq: Optional[Callable[[float], float]] = None
    stationary: bool = False
    boundary: BoundarySpec = BoundarySpec()
    forced: bool = False
    check_times: tuple = (0.0,)

    def __post_init__(self):
        x = np.linspace(self.a, self.b, 97)
        for t in self.check_times:
            speed = np.sum(self.z_x(x, t) ** 2, axis=1)
            err = np.max(np.abs(speed - 1.0))
            if err > 1e-10:
                raise ValueError(f"flow {self.name!r} violates |z_x| = 1 at t={t} "
                                 f"(max deviation {err:.2e})")

    def tail_integral(self, x, t) -> np.ndarray:
        """Integral of z_t over [x, b]."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.tail is not None:
            return self.tail(x, t)
        if self.stationary:
            return np.zeros((x.size, self.dim))
        out = np.empty((x.size, self.dim))
        for i, xi in enumerate(x):
            for j in range(self.dim):
                out[i, j] = integrate.quad(lambda s: self.z_t(np.array([s]), t)[0, j],
                                           xi, self.b, epsabs=1e-12, epsrel=1e-12,
                                           limit=200)[0]
        return out

    def fourth_derivative(self, x, t) -> np.ndarray:
        if self.z_xxxx is not None:
            return self.z_xxxx(x, t)
        step = 1e-4
        xm = np.clip(x - step, self.a, self.b)
        xp = np.clip(x + step, self.a, self.b)
        return (self.z_xxx(xp, t) - self.z_xxx(xm, t)) / (xp - xm)[:, None]

    def h2_seminorm_sq(self, t) -> float:
        if self.h2_sq is not None:
            return float(self.h2_sq(t))
        val, _ = integrate.quad(lambda s: float(np.sum(self.z_xx(np.array([s]), t) ** 2)),
                                self.a, self.b, epsabs=1e-13, epsrel=1e-13, limit=400)
        return val


def _dot(u, v):
    return np.einsum("nc,nc->n", u, v)


def lambda_values(flow: AnalyticFlow, x, t):
    """lambda = -(int_x^b z_t) . z_x - |z_xx|^2 and its first two x-derivatives."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    zx, zxx, zxxx = flow.z_x(x, t), flow.z_xx(x, t), flow.z_xxx(x, t)
    zxxxx = flow.fourth_derivative(x, t)
    zt, ztx = flow.z_t(x, t), flow.z_tx(x, t)
    tail = flow.tail_integral(x, t)
    lam = -_dot(tail, zx) - _dot(zxx, zxx)
    lam_x = _dot(zt, zx) - _dot(tail, zxx) - 2 * _dot(zxx, zxxx)
    lam_xx = (_dot(ztx, zx) + 2 * _dot(zt, zxx) - _dot(tail, zxxx)
              - 2 * (_dot(zxxx, zxxx) + _dot(zxx, zxxxx)))
    return lam, lam_x, lam_xx


def lambda_field(flow: AnalyticFlow, t):
    """Callables x -> lambda(x, t) and x -> lambda_x(x, t)."""
    return (lambda x: lambda_values(flow, x, t)[0],
            lambda x: lambda_values(flow, x, t)[1])


def multiplier_flux(flow: AnalyticFlow, x, t):
    """(lambda z_x)_x and its x-derivative."""
    lam, lam_x, lam_xx = lambda_values(flow, x, t)
    zx, zxx, zxxx = flow.z_x(x, t), flow.z_xx(x, t), flow.z_xxx(x, t)
    g = lam_x[:, None] * zx + lam[:, None] * zxx
    g_x = lam_xx[:, None] * zx + 2 * lam_x[:, None] * zxx + lam[:, None] * zxxx
    return g, g_x


def forced_terms(flow: AnalyticFlow, d: Dissection, t: float):
    """Hermite interpolants U, V, W of z(t), z_t(t) and (lambda z_x)_x(t)."""
    U = interp_hermite(partial(flow.z, t=t), partial(flow.z_x, t=t), d)
    V = interp_hermite(partial(flow.z_t, t=t), partial(flow.z_tx, t=t), d)
    g, g_x = multiplier_flux(flow, d.nodes, t)
    W = CurveState.from_nodal(d, g, g_x)
    return U, V, W


# built-in flows -------------------------------------------------------------

def _zero(x, t, dim):
    return np.zeros((np.size(x), dim))


def _constant(t, value):
    return value


def _circle(x, t, k):
    c, s = np.cos(x), np.sin(x)
    return np.stack([(c, s), (-s, c), (-c, -s), (s, -c), (c, s)][k], axis=1)


def circle() -> AnalyticFlow:
    """Unit circle (cos x, sin x) on [0, 2 pi]; stationary when semi-clamped."""
    zero = partial(_zero, dim=2)
    return AnalyticFlow(
        "circle", 2, 0.0, 2 * np.pi,
        *(partial(_circle, k=k) for k in range(4)), zero, zero,
        z_xxxx=partial(_circle, k=4), tail=zero,
        h2_sq=partial(_constant, value=2 * np.pi), stationary=True,
        boundary=BoundarySpec.semi_clamped())


HELIX_WINDING = np.pi / np.sqrt(np.pi**2 + 1)
HELIX_PITCH = 1.0 / np.sqrt(np.pi**2 + 1)
HELIX_LENGTH = 2 * np.sqrt(np.pi**2 + 1)


def _helix(x, t, k):
    lam, mu = HELIX_WINDING, HELIX_PITCH
    c, s = np.cos(lam * x), np.sin(lam * x)
    f = lam**k
    zero = np.zeros_like(x)
    if k == 0:
        return np.stack([c, s, mu * x], axis=1)
    if k == 1:
        return np.stack([-f * s, f * c, np.full_like(x, mu)], axis=1)
    return np.stack([(-f * c, -f * s), (f * s, -f * c), (f * c, f * s)][k - 2] + (zero,),
                    axis=1)


def helix() -> AnalyticFlow:
    """Helix with one full turn, stationary under clamped conditions."""
    zero = partial(_zero, dim=3)
    return AnalyticFlow(
        "helix", 3, 0.0, HELIX_LENGTH,
        *(partial(_helix, k=k) for k in range(4)), zero, zero,
        z_xxxx=partial(_helix, k=4), tail=zero,
        h2_sq=partial(_constant, value=HELIX_WINDING**4 * HELIX_LENGTH), stationary=True,
        boundary=BoundarySpec.clamped())


def _radius(t):
    return np.sqrt(1.0 - t**2 / (4 * np.pi**2))


def _radius_rate(t):
    return -t / (4 * np.pi**2 * _radius(t))


def _forced(x, t, k):
    r = _radius(t)
    c, s = np.cos(x), np.sin(x)
    zero = np.zeros_like(x)
    if k == 0:
        return np.stack([r * c, r * s, t * x / (2 * np.pi)], axis=1)
    if k == 1:
        return np.stack([-r * s, r * c, np.full_like(x, t / (2 * np.pi))], axis=1)
    pairs = [(-r * c, -r * s), (r * s, -r * c), (r * c, r * s)]
    return np.stack(pairs[k - 2] + (zero,), axis=1)


def _forced_t(x, t):
    dr = _radius_rate(t)
    return np.stack([dr * np.cos(x), dr * np.sin(x), x / (2 * np.pi)], axis=1)


def _forced_tx(x, t):
    dr = _radius_rate(t)
    return np.stack([-dr * np.sin(x), dr * np.cos(x), np.full_like(x, 1 / (2 * np.pi))],
                    axis=1)


def _forced_tail(x, t, b):
    dr = _radius_rate(t)
    return np.stack([dr * (np.sin(b) - np.sin(x)), dr * (np.cos(x) - np.cos(b)),
                     (b**2 - x**2) / (4 * np.pi)], axis=1)


def _forced_h2_sq(t):
    return 2 * np.pi * _radius(t) ** 2


def forced_helix() -> AnalyticFlow:
    """Circle in R^3 unwinding into a helix, driven by a manufactured load."""
    b = 2 * np.pi
    return AnalyticFlow(
        "forced_helix", 3, 0.0, b,
        *(partial(_forced, k=k) for k in range(4)), _forced_t, _forced_tx,
        z_xxxx=partial(_forced, k=4), tail=partial(_forced_tail, b=b),
        h2_sq=_forced_h2_sq,
        boundary=BoundarySpec.clamped(), forced=True,
        check_times=(0.0, 0.25, 0.5, 1.0))


FLOWS = {
    "circle": circle,
    "helix": helix,
    "forced_helix": forced_helix,
}


def get_flow(name: str) -> AnalyticFlow:
    try:
        return FLOWS[name]()
    except KeyError:
        raise KeyError(f"unknown flow {name!r}; available: {', '.join(FLOWS)}") from None
