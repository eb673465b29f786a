import dataclasses
import math

import numpy as np
import pytest

from elasticflow.analysis import (ConvergenceTable, ErrorAccumulator, convergence_study, eoc,
                                  exact_interpolant, h1l2_error, h2_error, weak_errors)
from elasticflow.forcing import get_flow
from elasticflow.hermite import CurveState, evaluate
from elasticflow.interpolate import interp_hermite
from elasticflow.mesh import uniform_dissection

from oracles import gauss_integral


def test_h2_error_of_interpolant_matches_direct_quadrature():
    for name in ("circle", "helix", "forced_helix"):
        flow = get_flow(name)
        d = uniform_dissection(flow.a, flow.b, 6)
        t = 0.3 if flow.forced else 0.0
        Iz = exact_interpolant(flow, d, t)
        direct = math.sqrt(gauss_integral(
            lambda x: np.sum((flow.z_xx(x, t) - evaluate(Iz, x, 2)) ** 2, 1), d.nodes, 16))
        assert h2_error(flow, t, Iz) == pytest.approx(direct, rel=1e-8)
        assert direct > 0


def test_h2_error_vanishes_for_cubics():
    flow = get_flow("circle")
    # a flow whose "exact" curve is a cubic with a known H2 seminorm
    cubic = dataclasses.replace(
        flow, check_times=(),
        z=lambda x, t: np.stack([x**3, x], 1), z_x=lambda x, t: np.stack([3 * x**2, 1 + 0 * x], 1),
        z_xx=lambda x, t: np.stack([6 * x, 0 * x], 1), h2_sq=lambda t: 12 * (2 * np.pi) ** 3)
    d = uniform_dissection(0.0, 2 * np.pi, 3)
    Z = interp_hermite(lambda x: cubic.z(x, 0), lambda x: cubic.z_x(x, 0), d)
    assert h2_error(cubic, 0.0, Z) <= 1e-10 * math.sqrt(12 * (2 * np.pi) ** 3)


def test_circle_h2_seminorm():
    assert get_flow("circle").h2_seminorm_sq(3.0) == pytest.approx(2 * np.pi, abs=1e-15)


def test_exact_trajectories_have_zero_weak_errors():
    flow = get_flow("forced_helix")
    d = uniform_dissection(flow.a, flow.b, 4)
    tau = 0.1
    traj = [exact_interpolant(flow, d, n * tau) for n in range(4)]
    assert weak_errors(flow, traj, tau) == (0.0, 0.0)
    still = get_flow("circle")
    zero = CurveState.zeros(uniform_dissection(still.a, still.b, 4), 2)
    assert h1l2_error(still, [zero] * 3, 0.1) == 0.0


def test_translation_invariance():
    flow = get_flow("helix")
    d = uniform_dissection(flow.a, flow.b, 5)
    Z = exact_interpolant(flow, d, 0.0)
    Zp = Z.with_coeffs(Z.coeffs * 1.01)
    shift = np.zeros_like(Z.coeffs).reshape(-1, 2, 3)
    shift[:, 0] = [1.0, -2.0, 0.5]
    Zs = Zp.with_coeffs(Zp.coeffs + shift.ravel())
    assert h2_error(flow, 0.0, Zs) == pytest.approx(h2_error(flow, 0.0, Zp), rel=1e-12)
    acc1, acc2 = ErrorAccumulator(flow, d, 0.1), ErrorAccumulator(flow, d, 0.1)
    acc1(0, Zp, None)
    acc2(0, Zs, None)
    assert acc1.linf_h1 == pytest.approx(acc2.linf_h1, rel=1e-12)


def test_eoc():
    assert eoc([1.0, 0.25, 0.0625], [0.1, 0.05, 0.025])[1:] == [2.0, 2.0]
    r = eoc([1.0, 1 / 27], [0.3, 0.1])
    assert r[0] is None and r[1] == pytest.approx(3.0)
    assert math.isnan(eoc([1.0, 0.0], [1.0, 0.5])[1])


def test_study_and_csv(tmp_path):
    with pytest.raises(ValueError):
        convergence_study(get_flow("circle"), [8], [0.1], ["P1"], 0.2)
    tab = convergence_study(get_flow("circle"), [4, 8], [0.1], ["P1", "P2"], 0.2)
    assert tab.complete
    path = tab.write_csv("LinfH2", tmp_path / "t.csv")
    header, *rows = [line.split(",") for line in path.read_text().splitlines()]
    assert header == ["h", "err_LinfH2_P1_0.1", "eoc_LinfH2_P1_0.1",
                      "err_LinfH2_P2_0.1", "eoc_LinfH2_P2_0.1"]
    assert len(rows) == 2 and rows[0][2] == ""
    assert "LinfH2" in tab.summary()


def test_study_records_failures():
    tab = convergence_study(get_flow("circle"), [4, 8], [0.3], ["P1"], 1.0)
    assert not tab.complete and tab.failures
