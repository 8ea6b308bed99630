import json

import numpy as np
import pytest

from bicharlab.charts import (
    AnnulusChart,
    DiskChart,
    ModelChart,
    OrderBudgetError,
    OutOfCollarError,
    PhasePoint,
    bracket_fd,
    hamiltonian_field,
    load_chart,
)


def fd_jet(chart, y, xp, xip, h=1e-4):
    """Independent first-derivative oracle: Richardson central differences."""

    def d(f):
        def central(step):
            return (f(step) - f(-step)) / (2 * step)

        return (4 * central(h / 2) - central(h)) / 3

    r = chart.eval_r(y, xp, xip).r
    return (
        r,
        d(lambda s: chart._jet_any_y(y + s, xp, xip).r),
        d(lambda s: chart._jet_any_y(y, xp + s, xip).r),
        d(lambda s: chart._jet_any_y(y, xp, xip + s).r),
    )


def test_disk_frozen_values():
    c = DiskChart()
    jet = c.eval_r(0.0, 0.3, 0.5)
    assert jet.r == pytest.approx(0.75, abs=1e-15)
    assert jet.dr_dy == pytest.approx(-0.5, abs=1e-15)
    jet = c.eval_r(0.0, -1.0, 1.0)
    assert jet.r == pytest.approx(0.0, abs=1e-15)
    assert jet.dr_dy == pytest.approx(-2.0, abs=1e-15)
    assert c.r0(0.0, 0.5) == pytest.approx(0.75)
    assert c.r1(0.0, 1.0) == pytest.approx(-2.0)


def test_hamiltonian_field_examples():
    c = DiskChart()
    dy, dxp, deta, dxip = hamiltonian_field(c, PhasePoint(0.1, 0.0, 0.3, 0.8))
    assert dy == pytest.approx(0.6, abs=1e-15)
    assert dxip == 0.0
    _, _, deta, _ = hamiltonian_field(c, PhasePoint(0.0, 0.0, 0.0, 1.0))
    assert deta == pytest.approx(-2.0, abs=1e-15)


def test_fd_agreement_random_points():
    rng = np.random.default_rng(42)
    charts = [
        DiskChart(),
        AnnulusChart(0.5, "inner"),
        AnnulusChart(0.5, "outer"),
        ModelChart([(0, 1, 0, 1.0), (1, 0, 1, 1.0), (2, 2, 2, 0.7)]),
    ]
    for chart in charts:
        for _ in range(250):
            y = rng.uniform(0.01, chart.collar_width * 0.9)
            xp = rng.uniform(-2.0, 2.0)
            xip = rng.uniform(-1.2, 1.2)
            jet = chart.eval_r(y, xp, xip)
            _, fy, fxp, fxip = fd_jet(chart, y, xp, xip)
            scale = 1.0 + abs(jet.dr_dy) + abs(jet.dr_dxp) + abs(jet.dr_dxip)
            assert abs(jet.dr_dy - fy) / scale < 1e-6
            assert abs(jet.dr_dxp - fxp) / scale < 1e-6
            assert abs(jet.dr_dxip - fxip) / scale < 1e-6


def test_disk_r_against_embedded_metric():
    # metric pulled back through the coordinate map, built by differencing
    # the embedding itself
    c = DiskChart()
    rng = np.random.default_rng(1)
    h = 1e-5
    for _ in range(50):
        y, th, xip = rng.uniform(0.0, 0.3), rng.uniform(0, 6.28), rng.uniform(-1, 1)

        def emb(yy, tt):
            return np.array([(1 - yy) * np.cos(tt), (1 - yy) * np.sin(tt)])

        jt = (emb(y, th + h) - emb(y, th - h)) / (2 * h)
        g_tt = jt @ jt
        r_oracle = 1.0 - xip**2 / g_tt
        assert abs(c.eval_r(y, th, xip).r - r_oracle) < 1e-8


def test_collar_domain_enforced():
    c = DiskChart(collar_width=0.35)
    with pytest.raises(OutOfCollarError):
        c.eval_r(0.5, 0.0, 0.1)
    with pytest.raises(OutOfCollarError):
        c.eval_r(-0.01, 0.0, 0.1)
    # model charts have no ambient domain
    m = ModelChart([(0, 1, 0, 1.0)])
    assert m.eval_r(5.0, 0.0, 0.2).r == pytest.approx(0.2)


def test_bracket_model_chart_frozen():
    m = ModelChart([(0, 1, 0, 1.0), (1, 0, 1, 1.0)])  # r0 = zeta1, r1 = z1
    assert m.iterated_bracket(0, 0.0, 0.0) == 0.0
    assert m.iterated_bracket(1, 0.0, 0.0) == pytest.approx(1.0, abs=1e-14)
    assert m.iterated_bracket(2, 0.0, 0.0) == 0.0


def test_bracket_rotational_charts_vanish():
    for chart in (DiskChart(), AnnulusChart(0.4, "inner")):
        assert chart.iterated_bracket(0, 0.7, 1.0) != 0.0
        for j in (1, 2, 3):
            assert chart.iterated_bracket(j, 0.7, 1.0) == 0.0
        # the generic nested-difference engine agrees
        assert abs(bracket_fd(chart, 1, 0.7, 1.0)) < 1e-6


def test_bracket_fd_matches_polynomial():
    m = ModelChart(
        [(0, 1, 0, 1.0), (2, 0, 0, -0.5), (1, 1, 1, 1.0), (0, 0, 1, 0.3)],
        max_derivative_order=8,
    )
    for pt in [(0.3, -0.2), (0.0, 0.5), (-0.4, 0.1)]:
        exact = m.iterated_bracket(1, *pt)
        fd = bracket_fd(m, 1, *pt)
        assert abs(exact - fd) < 1e-6 * (1 + abs(exact))


def test_bracket_budget():
    m = ModelChart([(0, 1, 0, 1.0)], max_derivative_order=4)
    with pytest.raises(OrderBudgetError):
        m.iterated_bracket(3, 0.0, 0.0)


def test_cartesian_roundtrip():
    rng = np.random.default_rng(7)
    for chart in (DiskChart(), AnnulusChart(0.45, "inner"), AnnulusChart(0.45, "outer")):
        for _ in range(100):
            p = PhasePoint(
                rng.uniform(0, chart.collar_width),
                rng.uniform(-3, 3),
                rng.uniform(-1, 1),
                rng.uniform(-1, 1),
            )
            x, xi = chart.to_cartesian(p)
            q = chart.from_cartesian(x, xi)
            assert abs(q.y - p.y) < 1e-12
            assert abs(np.angle(np.exp(1j * (q.xp - p.xp)))) < 1e-12
            assert abs(q.eta - p.eta) < 1e-12
            assert abs(q.xip - p.xip) < 1e-12


def test_disk_energy_matches_euclidean():
    c = DiskChart()
    rng = np.random.default_rng(11)
    for _ in range(50):
        p = PhasePoint(rng.uniform(0, 0.3), rng.uniform(0, 6), rng.uniform(-1, 1), rng.uniform(-1, 1))
        x, xi = c.to_cartesian(p)
        r = c.eval_r(p.y, p.xp, p.xip).r
        assert abs((p.eta**2 - r) - (xi @ xi - 1.0)) < 1e-12


def test_center_point():
    c = DiskChart()
    for cov in ([1.0, 0.0], [0.0, 1.0], [-0.6, 0.8]):
        p = c.from_cartesian([0.0, 0.0], cov)
        assert p.y == pytest.approx(1.0) and p.xip == 0.0
        x, xi = c.to_cartesian(p)
        assert np.allclose(x, 0.0) and np.allclose(xi, cov)


def test_load_chart(tmp_path):
    assert load_chart("disk").kind == "disk"
    a = load_chart("annulus:0.5:inner")
    assert a.rho_in == 0.5 and a.component == "inner"
    spec = {"kind": "model", "terms": [[0, 1, 0, 1.0], [1, 0, 1, 1.0]]}
    assert load_chart(spec).kind == "model"
    path = tmp_path / "chart.json"
    path.write_text(json.dumps(spec))
    m = load_chart(str(path))
    assert m.r0(0.0, 0.7) == pytest.approx(0.7)


def test_model_chart_validation():
    with pytest.raises(ValueError):
        ModelChart([])
    with pytest.raises(ValueError):
        ModelChart([(0, -1, 0, 1.0)])
