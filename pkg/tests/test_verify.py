import numpy as np
import pytest

from bicharlab import modes, verify
from bicharlab.bumps import bump_profile, plateau_step, window
from bicharlab.charts import AnnulusChart, DiskChart
from bicharlab.quantize import InteriorSymbol, SeparableTerm, TangentialSymbol
from bicharlab.verify import ModeRow, PropagationReport, Thresholds

CHART = DiskChart()


def ring_window(s1, s2):
    return window(np.hypot(s1, s2), 0.5, 0.7, 1.3, 1.5)


def conserved_eval(x1, x2, xi1, xi2):
    ell = x1 * xi2 - x2 * xi1
    return ring_window(xi1, xi2) * window(ell, 0.1, 0.2, 0.35, 0.45)


def conserved_symbol():
    return InteriorSymbol(
        evaluator=conserved_eval,
        xi_bound=1.5,
        x_envelope=lambda x1, x2: np.where(np.hypot(x1, x2) <= 1.0, 1.0, 0.0),
        name="conserved window",
    )


def offcenter_bump(xi_bound=1.4):
    return InteriorSymbol(
        terms=[
            SeparableTerm(
                lambda x1, x2: bump_profile(np.hypot(x1 - 0.25, x2) / 0.2),
                lambda s1, s2: window(np.hypot(s1, s2), 0.6, 0.8, 1.2, 1.4),
            )
        ],
        xi_bound=xi_bound,
        name="off-center bump",
    )


def disk_cloud(rng, num, r_max=0.97, speed=(0.3, 1.5)):
    rr = r_max * np.sqrt(rng.uniform(0.0, 1.0, num))
    aa = rng.uniform(0.0, 2.0 * np.pi, num)
    sp = rng.uniform(*speed, num)
    bb = rng.uniform(0.0, 2.0 * np.pi, num)
    return rr * np.cos(aa), rr * np.sin(aa), sp * np.cos(bb), sp * np.sin(bb)


# -- transport ----------------------------------------------------------


def test_transport_identity_at_zero_time():
    a = offcenter_bump()
    tau = verify.transport_symbol(CHART, a, 0.0)
    x1, x2, s1, s2 = disk_cloud(np.random.default_rng(0), 300)
    got = tau.eval(x1, x2, s1, s2)
    want = np.real(a.eval(x1, x2, s1, s2))
    assert np.max(np.abs(got - want)) == 0.0
    assert tau.unresolved == 0


def test_transport_recenters_free_bump():
    s = 0.1
    a = InteriorSymbol(
        terms=[
            SeparableTerm(
                lambda x1, x2: bump_profile(np.hypot(x1, x2) / 0.3),
                ring_window,
            )
        ],
        xi_bound=1.5,
        name="centered bump",
    )
    tau = verify.transport_symbol(CHART, a, s)
    x1, x2, s1, s2 = disk_cloud(np.random.default_rng(1), 300, r_max=0.3)
    want = bump_profile(np.hypot(x1 + 2 * s * s1, x2 + 2 * s * s2) / 0.3)
    want = want * ring_window(s1, s2)
    got = tau.eval(x1, x2, s1, s2)
    assert np.max(np.abs(got - want)) < 1e-13


def test_transport_conserved_quantities_invariant():
    # speed and angular momentum survive every reflection, so a window in
    # those variables is a fixed point of the pullback for any time
    tau = verify.transport_symbol(CHART, conserved_eval, 3.7)
    x1, x2, s1, s2 = disk_cloud(np.random.default_rng(2), 400)
    dev = np.abs(tau.eval(x1, x2, s1, s2) - conserved_eval(x1, x2, s1, s2))
    assert np.max(dev) < 1e-12
    assert tau.unresolved == 0


def test_transport_round_trip_inverts():
    a = offcenter_bump()
    tau1 = verify.transport_symbol(CHART, a, 0.9)
    tau2 = verify.transport_symbol(CHART, tau1, -0.9)
    x1, x2, s1, s2 = disk_cloud(np.random.default_rng(3), 300)
    dev = np.abs(tau2.eval(x1, x2, s1, s2) - np.real(a.eval(x1, x2, s1, s2)))
    assert np.max(dev) < 1e-12
    assert tau1.unresolved + tau2.unresolved == 0


def test_transport_zero_outside_disk_and_static_nodes():
    tau = verify.transport_symbol(CHART, lambda *p: np.ones_like(p[0]), 0.5)
    assert tau.eval(1.2, 0.0, 1.0, 0.0) == 0.0
    assert tau.eval(0.3, 0.0, 0.0, 0.0) == 1.0


def test_transport_marks_doubtful_tangential_contacts():
    tau = verify.transport_symbol(CHART, lambda x1, x2, s1, s2: ring_window(s1, s2), 0.5)
    val = tau.eval(np.array([1.0]), np.array([0.0]), np.array([0.0]), np.array([0.8]))
    assert val[0] == 0.0
    assert tau.unresolved == 1

    spatial = verify.transport_symbol(
        CHART, lambda x1, x2, s1, s2: window(np.hypot(x1, x2), 0.2, 0.3, 0.5, 0.6), 0.5
    )
    val = spatial.eval(np.array([1.0]), np.array([0.0]), np.array([0.0]), np.array([0.8]))
    assert val[0] == 0.0
    assert spatial.unresolved == 0


def test_transport_requires_disk_chart():
    with pytest.raises(NotImplementedError):
        verify.transport_symbol(AnnulusChart(0.35), conserved_eval, 0.3)


def test_gliding_rotation_traced_rate():
    assert abs(verify.gliding_rotation(CHART, 0.4) - 0.8) < 1e-8
    assert abs(verify.gliding_rotation(CHART, np.pi / 2) - np.pi) < 1e-8
    assert abs(verify.gliding_rotation(CHART, 0.4, xip=-1.0) + 0.8) < 1e-8
    assert abs(verify.gliding_rotation(CHART, -0.7) + 1.4) < 1e-8
    with pytest.raises(ValueError, match="xip"):
        verify.gliding_rotation(CHART, 0.4, xip=0.5)


# -- invariance ---------------------------------------------------------


def test_invariance_gap_zero_time_all_zero():
    fam = [modes.laplace_disk_mode(0, k) for k in (8, 12)]
    rep = verify.invariance_gap(fam, offcenter_bump(), 0.0)
    assert rep.kind == "invariance"
    assert rep.verdict == "pass"
    assert all(r.gap < 1e-12 for r in rep.rows)


def test_invariance_gap_free_route_decays():
    fam = [modes.laplace_disk_mode(0, k) for k in (10, 14, 20, 28)]
    rep = verify.invariance_gap(fam, offcenter_bump(), 0.15)
    assert rep.verdict == "pass"
    gaps = [r.gap for r in rep.rows]
    assert gaps[-1] <= 0.05
    assert all(gaps[i + 1] <= gaps[i] + 1e-3 for i in range(len(gaps) - 1))
    # first-order pairing error shrinks like h
    assert rep.notes["gap_rate"] > 0.6
    hs = [r.h for r in rep.rows]
    assert hs == sorted(hs, reverse=True)


def test_invariance_gap_pullback_conserved_symbol():
    # flow-invariant symbol: the gap isolates integrator roundoff
    fam = [modes.laplace_disk_mode(0, 8)]
    rep = verify.invariance_gap(fam, conserved_symbol(), 1.3, route="pullback", check=False)
    assert rep.verdict == "pass"
    assert rep.rows[0].gap < 1e-10
    assert abs(rep.rows[0].before) > 1e-3
    assert rep.notes["unresolved"] == 0


def test_invariance_gap_route_validated():
    fam = [modes.laplace_disk_mode(0, 8)]
    with pytest.raises(ValueError, match="route"):
        verify.invariance_gap(fam, offcenter_bump(), 0.1, route="sideways")


# -- support ------------------------------------------------------------


def high_momentum_window():
    return InteriorSymbol(
        evaluator=lambda x1, x2, s1, s2: window(
            x1 * s2 - x2 * s1, 0.78, 0.84, 0.96, 1.02
        )
        * window(np.hypot(s1, s2), 0.75, 0.85, 1.15, 1.25),
        xi_bound=1.25,
        x_envelope=lambda x1, x2: window(np.hypot(x1, x2), 0.55, 0.65, 0.98, 1.04),
        name="angular-momentum 0.9 window",
    )


def test_support_gap_disjoint_window_stays_small():
    # family concentrates at angular momentum ~0.5, symbol sits at ~0.9
    fam = [modes.stokes_disk_mode(8, 2), modes.stokes_disk_mode(12, 3)]
    rep = verify.support_gap(fam, high_momentum_window(), 0.9)
    assert rep.kind == "support"
    assert rep.verdict == "pass"
    for r in rep.rows:
        assert 0.0 <= r.before <= 1.0 and 0.0 <= r.after <= 1.0
        assert r.before < 0.05
        assert r.after <= 2.0 * r.before + 1e-3
    assert rep.notes["unresolved"] == 0


def test_support_gap_reverse_transport_recovers_mass():
    fam = [modes.stokes_disk_mode(8, 2)]
    a = high_momentum_window()
    rep1 = verify.support_gap(fam, a, 0.9)
    round_trip = InteriorSymbol(
        evaluator=verify.transport_symbol(
            CHART, verify.transport_symbol(CHART, a, 0.9), -0.9
        ).eval,
        xi_bound=a.xi_bound,
        x_envelope=lambda x1, x2: np.where(np.hypot(x1, x2) <= 1.0, 1.0, 0.0),
        name="round trip",
    )
    rep2 = verify.support_gap(fam, round_trip, 0.0)
    assert abs(rep2.rows[0].before - rep1.rows[0].before) < 1e-10


def test_support_gap_zero_symbol_trivial():
    fam = [modes.stokes_disk_mode(8, 2)]
    zero = InteriorSymbol(
        terms=[SeparableTerm(lambda x1, x2: 0.0 * x1, ring_window)],
        xi_bound=1.5,
        name="zero",
    )
    rep = verify.support_gap(fam, zero, 0.7)
    assert rep.verdict == "pass"
    assert rep.rows[0].before == 0.0 and rep.rows[0].after == 0.0


def test_support_gap_whispering_arc_rotates():
    fam = [modes.stokes_disk_mode(16, 1), modes.stokes_disk_mode(20, 1)]
    arc = TangentialSymbol(
        lambda y, th, xp: (1.0 - plateau_step(y, 0.1, 0.2))
        * bump_profile((np.mod(th - 1.0, 2.0 * np.pi) - np.pi) / 1.2)
        * window(xp, 0.6, 0.68, 0.86, 0.94),
        y_support=0.2,
        theta_dependent=True,
        name="boundary arc at grazing momentum",
    )
    rep = verify.support_gap(fam, arc, 0.4)
    assert rep.verdict == "pass"
    assert abs(rep.notes["rotation_angle"] - 0.8) < 1e-8
    for r in rep.rows:
        # pure angular modes make the rotated-arc mass match exactly up
        # to the spectral accuracy of the theta quantization
        assert r.before > 0.01
        assert abs(r.gap) < 1e-6


def test_support_gap_rejects_other_inputs():
    fam = [modes.stokes_disk_mode(8, 2)]
    with pytest.raises(TypeError):
        verify.support_gap(fam, lambda *p: 0.0, 0.3)


# -- elliptic and off-shell mass ----------------------------------------


def elliptic_window():
    return TangentialSymbol(
        lambda y, xp: (1.0 - plateau_step(y, 0.1, 0.2))
        * window(np.abs(xp), 1.28, 1.35, 1.55, 1.62),
        y_support=0.2,
        name="fiber window above the glancing speed",
    )


def test_elliptic_mass_exact_zero_for_analytic_families():
    fam = [modes.laplace_disk_mode(0, k) for k in (8, 12)]
    fam += [modes.stokes_disk_mode(8, 2), modes.stokes_disk_mode(12, 3)]
    rep = verify.elliptic_mass(fam, elliptic_window())
    assert rep.kind == "elliptic"
    assert rep.verdict == "pass"
    # single angular modes never touch the window, so the pairings are
    # exactly zero rather than merely o(1)
    assert max(r.gap for r in rep.rows) < 1e-20


def test_elliptic_mass_rejects_low_fiber_support():
    bad = TangentialSymbol(
        lambda y, xp: (1.0 - plateau_step(y, 0.1, 0.2))
        * window(np.abs(xp), 0.4, 0.5, 0.7, 0.8),
        y_support=0.2,
        name="window inside the glancing ball",
    )
    with pytest.raises(ValueError, match="vanish"):
        verify.elliptic_mass([modes.laplace_disk_mode(0, 8)], bad)
    with pytest.raises(TypeError):
        verify.elliptic_mass([modes.laplace_disk_mode(0, 8)], offcenter_bump())


def off_shell_window(lo, hi, xi_bound, name):
    return InteriorSymbol(
        terms=[
            SeparableTerm(
                lambda x1, x2: 1.0 - plateau_step(np.hypot(x1, x2), 0.62, 0.76),
                lambda s1, s2: window(np.hypot(s1, s2), lo, lo + 0.1, hi - 0.1, hi),
            )
        ],
        xi_bound=xi_bound,
        name=name,
    )


def test_car_mass_decays_like_h_both_sides_of_shell():
    fam = [modes.laplace_disk_mode(0, k) for k in (8, 12, 16)]
    for sym in (
        off_shell_window(0.3, 0.7, 0.7, "half-speed window"),
        off_shell_window(1.3, 1.7, 1.7, "superluminal window"),
    ):
        rep = verify.car_mass(fam, sym)
        assert rep.kind == "car"
        assert rep.verdict == "pass"
        assert 0.0 < rep.notes["car_constant"] < 1.0
        assert rep.rows[-1].gap <= rep.notes["car_constant"] * rep.rows[-1].h


def test_car_mass_rejects_on_shell_support():
    bad = InteriorSymbol(
        terms=[
            SeparableTerm(
                lambda x1, x2: 1.0 - plateau_step(np.hypot(x1, x2), 0.62, 0.76),
                ring_window,
            )
        ],
        xi_bound=1.5,
        name="shell-touching window",
    )
    with pytest.raises(ValueError, match="vanish"):
        verify.car_mass([modes.laplace_disk_mode(0, 8)], bad)
    with pytest.raises(TypeError):
        verify.car_mass([modes.laplace_disk_mode(0, 8)], elliptic_window())


# -- oscillation tails ---------------------------------------------------


def test_h_oscillation_tail_interior_bounds_and_nesting():
    fam = [modes.laplace_disk_mode(0, k) for k in (8, 12, 16)]
    tails = verify.h_oscillation_tail(fam, (2.0, 4.0, 8.0))
    assert tails.shape == (3, 3)
    assert np.all(tails[1] <= 0.01)
    assert np.all(np.diff(tails, axis=0) <= 0.0)
    assert np.all(tails >= 0.0)
    single = verify.h_oscillation_tail(fam, 4.0)
    assert single.shape == (3,)
    np.testing.assert_allclose(single, verify.h_oscillation_tail(fam, (4.0,))[0])
    # a different max R sizes a different box, so only grid-level agreement
    np.testing.assert_allclose(single, tails[1], rtol=0.05)


def test_h_oscillation_tail_tangential_zero_for_pure_modes():
    fam = [modes.stokes_disk_mode(8, 2), modes.stokes_disk_mode(12, 3)]
    tails = verify.h_oscillation_tail(fam, 4.0, variant="tangential")
    assert np.max(np.abs(tails)) == 0.0


def test_h_oscillation_tail_validation():
    fam = [modes.laplace_disk_mode(0, 8)]
    with pytest.raises(ValueError, match="exceed 1"):
        verify.h_oscillation_tail(fam, 1.0)
    with pytest.raises(ValueError, match="variant"):
        verify.h_oscillation_tail(fam, 4.0, variant="angular")


# -- reports -------------------------------------------------------------


def _rows(entries):
    return [ModeRow(*e) for e in entries]


def test_report_round_trip_and_recompute():
    fam = [modes.laplace_disk_mode(0, k) for k in (10, 14)]
    rep = verify.invariance_gap(fam, offcenter_bump(), 0.15)
    back = PropagationReport.from_dict(rep.to_dict())
    assert back.verdict == rep.verdict
    assert back.recompute_verdict() == rep.verdict
    assert back.rows == rep.rows
    assert back.thresholds == rep.thresholds
    text = str(rep)
    for token in ("theta_pass", "kappa", "theta_floor", "verdict"):
        assert token in text


def test_report_verdict_rules_from_stored_numbers():
    th = Thresholds()
    inv = PropagationReport(
        "e", "a", 0.1, "invariance",
        _rows([(0.1, 1.0, 1.02, 0.02), (0.05, 1.0, 1.01, 0.01)]), th,
    )
    assert inv.verdict == "pass"
    growing = PropagationReport(
        "e", "a", 0.1, "invariance",
        _rows([(0.1, 1.0, 1.01, 0.01), (0.05, 1.0, 1.04, 0.04)]), th,
    )
    assert growing.verdict == "fail"
    support_bad = PropagationReport(
        "e", "a", 0.1, "support", _rows([(0.1, 0.01, 0.05, 0.04)]), th,
    )
    assert support_bad.verdict == "fail"
    support_ok = PropagationReport(
        "e", "a", 0.1, "support", _rows([(0.1, 0.01, 0.019, 0.009)]), th,
    )
    assert support_ok.verdict == "pass"
    elliptic_bad = PropagationReport(
        "e", "a", 0.0, "elliptic", _rows([(0.1, 0.2, 0.0, 0.2), (0.05, 0.0, 0.0, 0.0)]), th,
    )
    assert elliptic_bad.verdict == "fail"
    car_stuck = PropagationReport(
        "e", "a", 0.0, "car",
        _rows([(0.1, 0.04, 0.0, 0.04), (0.05, 0.039, 0.0, 0.039)]), th,
    )
    assert car_stuck.verdict == "fail"
    car_ok = PropagationReport(
        "e", "a", 0.0, "car",
        _rows([(0.1, 0.04, 0.0, 0.04), (0.05, 0.021, 0.0, 0.021)]), th,
    )
    assert car_ok.verdict == "pass"


def test_report_inconclusive_and_validation():
    th = Thresholds()
    rep = PropagationReport(
        "e", "a", 0.1, "support", _rows([(0.1, 0.2, 0.2, 0.0)]), th,
        notes={"unresolved": 3.0},
    )
    assert rep.verdict == "inconclusive"
    empty = PropagationReport("e", "a", 0.1, "invariance", [], th)
    assert empty.verdict == "inconclusive"
    with pytest.raises(ValueError, match="kind"):
        PropagationReport("e", "a", 0.1, "spectral", [], th)


def test_thresholds_overridable_and_printed():
    loose = Thresholds(theta_pass=0.5, kappa=10.0, theta_floor=0.05)
    rep = PropagationReport(
        "e", "a", 0.1, "support", _rows([(0.1, 0.01, 0.05, 0.04)]), loose,
    )
    assert rep.verdict == "pass"
    assert rep.to_dict()["thresholds"]["kappa"] == 10.0
    assert "kappa = 10" in str(rep)
