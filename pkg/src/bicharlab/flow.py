"""Broken bicharacteristic flow with glancing-aware boundary dispatch.

A ray alternates between exact straight-line flight away from the boundary
collar, an ODE integration of the collar Hamilton field inside it, and a
constrained gliding motion along the boundary when it arrives tangentially
with the boundary curving away.  Each boundary contact is classified and
dispatched: transversal contacts reflect, tangential contacts with the
boundary curving toward the domain pass straight through, the remaining
glancing contacts start a glide that releases where the curvature condition
changes sign.  Unresolvable contacts abort the trace rather than guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .charts import CollarChart, PhasePoint
from .classify import GLANCING, HYPERBOLIC, BoundaryClass, classify

__all__ = [
    "TraceOptions",
    "RayEvent",
    "RaySegment",
    "GeneralizedRay",
    "trace",
    "reflect_hyperbolic",
    "step_gliding",
    "flow_pullback",
]


@dataclass(frozen=True)
class TraceOptions:
    rtol: float = 1e-11
    atol: float = 1e-13
    max_step_collar: float = 0.01
    tol_g: float = 1e-8
    tol_bracket: float = 1e-6
    k_max: Optional[int] = None
    graze_tol: float = 1e-9
    gliding_step: float = 1e-3
    kick: float = 1e-9
    max_events: int = 10_000


@dataclass(frozen=True)
class RayEvent:
    kind: str
    t: float
    point: Optional[PhasePoint] = None
    x: Optional[tuple] = None
    classification: Optional[BoundaryClass] = None


@dataclass
class RaySegment:
    kind: str  # "free" | "collar" | "gliding"
    frame: str  # "cartesian" | "collar"
    t0: float
    t1: float
    chart: Optional[CollarChart]
    evaluate: Callable[[float], np.ndarray]


class GeneralizedRay:
    """Piecewise trajectory together with its boundary events.

    State vectors are (x1, x2, xi1, xi2) in the cartesian frame and
    (y, x', eta, xi') in a collar frame.
    """

    def __init__(self, chart, segments, events, status, options, t0, t1):
        self.chart = chart
        self.segments = segments
        self.events = events
        self.status = status
        self.options = options
        self.t0 = t0
        self.t1 = t1

    @property
    def t_final(self) -> float:
        """Endpoint away from the anchor t = 0 (negative for backward rays)."""
        return self.t0 if abs(self.t0) > abs(self.t1) else self.t1

    @property
    def reflections(self) -> int:
        return sum(1 for e in self.events if e.kind == "reflect")

    def event_times(self, kind: str):
        return [e.t for e in self.events if e.kind == kind]

    def segment_at(self, t: float) -> RaySegment:
        if not self.segments:
            raise ValueError("empty ray")
        lo, hi = sorted((self.t0, self.t1))
        if not (lo - 1e-9 <= t <= hi + 1e-9):
            raise ValueError(f"time {t} outside [{lo}, {hi}]")
        for seg in self.segments:
            if seg.t0 - 1e-12 <= t <= seg.t1 + 1e-12:
                return seg
        return self.segments[-1]

    def state_vector(self, t: float):
        seg = self.segment_at(t)
        return seg.frame, seg.chart, np.asarray(seg.evaluate(t), dtype=float)

    def state_collar(self, t: float) -> PhasePoint:
        frame, chart, u = self.state_vector(t)
        if frame == "collar":
            return PhasePoint(u[0], u[1], u[2], u[3])
        for ch in self._charts():
            p = ch.from_cartesian(u[:2], u[2:])
            if -1e-9 <= p.y <= ch.collar_width:
                return p
        raise ValueError("state is outside every collar at this time")

    def state_cartesian(self, t: float):
        frame, chart, u = self.state_vector(t)
        if frame == "cartesian":
            return u[:2], u[2:]
        if not hasattr(chart, "to_cartesian"):
            raise ValueError("this chart has no ambient embedding")
        p = PhasePoint(max(u[0], 0.0), u[1], u[2], u[3])
        return chart.to_cartesian(p)

    def final_collar(self) -> PhasePoint:
        return self.state_collar(self.t_final)

    def final_cartesian(self):
        return self.state_cartesian(self.t_final)

    def _charts(self):
        charts = [self.chart]
        if hasattr(self.chart, "other_component"):
            charts.append(self.chart.other_component())
        return charts

    def _time_reversed(self) -> "GeneralizedRay":
        def rev_seg(seg: RaySegment) -> RaySegment:
            def ev(t, _seg=seg):
                u = np.array(_seg.evaluate(-t), dtype=float)
                u[2:] *= -1.0
                return u

            return RaySegment(seg.kind, seg.frame, -seg.t1, -seg.t0, seg.chart, ev)

        segs = [rev_seg(s) for s in reversed(self.segments)]
        evs = [
            RayEvent(
                e.kind,
                -e.t,
                e.point.flipped() if e.point is not None else None,
                e.x,
                e.classification,
            )
            for e in reversed(self.events)
        ]
        return GeneralizedRay(
            self.chart, segs, evs, self.status, self.options, -self.t1, -self.t0
        )


def reflect_hyperbolic(
    chart: CollarChart, point: PhasePoint, tol_g: float = 1e-8
) -> PhasePoint:
    """Specular update at a transversal boundary contact: eta -> +sqrt(r0)."""
    r0 = chart.r0(point.xp, point.xip)
    if r0 <= tol_g:
        raise ValueError(f"contact is not hyperbolic (r0 = {r0})")
    return PhasePoint(0.0, point.xp, math.sqrt(r0), point.xip)


def _glide_field(chart: CollarChart, xp: float, xip: float):
    jet = chart._jet_any_y(0.0, xp, xip)
    return -jet.dr_dxip, jet.dr_dxp


def _project_shell(chart: CollarChart, xp: float, xip: float) -> float:
    # Newton steps in xi' push the point back onto {r0 = 0}
    for _ in range(3):
        jet = chart._jet_any_y(0.0, xp, xip)
        if abs(jet.r) < 1e-14 * (1.0 + xip * xip):
            break
        if abs(jet.dr_dxip) < 1e-12:
            break
        xip = xip - jet.r / jet.dr_dxip
    return xip


def step_gliding(chart: CollarChart, point: PhasePoint, ds: float) -> PhasePoint:
    """One RK4 step of the gliding field on {y = 0, r0 = 0}."""
    xp, xip = point.xp, point.xip
    k1 = _glide_field(chart, xp, xip)
    k2 = _glide_field(chart, xp + 0.5 * ds * k1[0], xip + 0.5 * ds * k1[1])
    k3 = _glide_field(chart, xp + 0.5 * ds * k2[0], xip + 0.5 * ds * k2[1])
    k4 = _glide_field(chart, xp + ds * k3[0], xip + ds * k3[1])
    xp2 = xp + ds * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0]) / 6.0
    xip2 = xip + ds * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1]) / 6.0
    return PhasePoint(0.0, xp2, 0.0, _project_shell(chart, xp2, xip2))


def _ev(fn, terminal, direction):
    fn.terminal = terminal
    fn.direction = direction
    return fn


class _Tracer:
    def __init__(self, chart: CollarChart, options: TraceOptions):
        self.chart = chart
        self.opts = options
        self.segments: list = []
        self.events: list = []
        self.status = "completed"
        self.active_chart = chart
        self.embeddable = hasattr(chart, "to_cartesian")
        self.bands = []
        if self.embeddable:
            charts = [chart]
            if hasattr(chart, "other_component"):
                charts.append(chart.other_component())
            for ch in charts:
                if ch.kind == "annulus" and ch.component == "inner":
                    self.bands.append((ch, ch.rho_in + 0.5 * ch.collar_width, "inner"))
                else:
                    self.bands.append((ch, 1.0 - 0.5 * ch.collar_width, "outer"))

    # -- event logging ---------------------------------------------------

    def _log(self, kind, t, point=None, x=None, classification=None):
        if point is not None and x is None and hasattr(self.active_chart, "to_cartesian"):
            try:
                xa, _ = self.active_chart.to_cartesian(
                    PhasePoint(max(point.y, 0.0), point.xp, point.eta, point.xip)
                )
                x = (float(xa[0]), float(xa[1]))
            except ValueError:
                x = None
        self.events.append(RayEvent(kind, t, point, x, classification))
        if len(self.events) > self.opts.max_events:
            self.status = "aborted_max_events"
            return False
        return True

    # -- free flight -------------------------------------------------------

    def _entry_time(self, x, xi):
        """Earliest future crossing into a collar band, or None."""
        best = None
        a = float(xi @ xi)
        b = float(x @ xi)
        for ch, radius, side in self.bands:
            c = float(x @ x) - radius * radius
            disc = b * b - a * c
            if disc <= 0.0:
                continue
            root = math.sqrt(disc)
            # outer bands are entered moving outward (larger root), inner
            # bands moving inward (smaller root)
            t_cross = (-b + root) / (2.0 * a) if side == "outer" else (-b - root) / (2.0 * a)
            if t_cross > 1e-13 and (best is None or t_cross < best[0]):
                best = (t_cross, ch)
        return best

    def run_free(self, t, x, xi, t_total):
        x = np.array(x, dtype=float)
        xi = np.array(xi, dtype=float)
        hit = self._entry_time(x, xi)
        t_end = t_total if hit is None else min(t + hit[0], t_total)

        def ev(tt, _t=t, _x=x.copy(), _xi=xi.copy()):
            return np.concatenate([_x + 2.0 * (tt - _t) * _xi, _xi])

        self.segments.append(RaySegment("free", "cartesian", t, t_end, None, ev))
        if hit is None or t + hit[0] >= t_total:
            return t_total, None, None
        x_new = x + 2.0 * hit[0] * xi
        pt = hit[1].from_cartesian(x_new, xi)
        self.active_chart = hit[1]
        if not self._log("enter_collar", t_end, pt, (float(x_new[0]), float(x_new[1]))):
            return t_end, None, None
        return t_end, hit[1], pt

    # -- collar integration --------------------------------------------------

    def _rhs(self, chart):
        def f(tt, u):
            jet = chart._jet_any_y(u[0], u[1], u[3])
            return (2.0 * u[2], -jet.dr_dxip, jet.dr_dy, jet.dr_dxp)

        return f

    def _kick(self, chart, u):
        # one tiny explicit RK4 step of the true field, so restarts do not
        # sit exactly on an event root
        h = self.opts.kick
        f = self._rhs(chart)
        u = np.asarray(u, dtype=float)
        k1 = np.array(f(0, u))
        k2 = np.array(f(0, u + 0.5 * h * k1))
        k3 = np.array(f(0, u + 0.5 * h * k2))
        k4 = np.array(f(0, u + h * k3))
        return u + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0

    def run_collar(self, t, chart, pt, t_total):
        """Integrate inside the collar until contact, exit, or time runs out.

        Returns (t_new, mode, payload) with mode in {"free", "collar",
        "glide", "done"}.
        """
        opts = self.opts
        if pt.y <= opts.graze_tol and pt.eta <= 0.0:
            # on the boundary moving along or into it: dispatch immediately
            return self.dispatch(t, chart, pt, t_total)

        u0 = np.array([pt.y, pt.xp, pt.eta, pt.xip], dtype=float)
        events = [
            _ev(lambda tt, u: u[0], True, -1),  # transversal boundary contact
            _ev(lambda tt, u: u[2], True, 0),  # turning point (eta = 0)
        ]
        if self.embeddable:
            half = 0.5 * chart.collar_width
            events.append(_ev(lambda tt, u: u[0] - half, True, 1))  # leaves band

        sol = solve_ivp(
            self._rhs(chart),
            (t, t_total),
            u0,
            method="RK45",
            rtol=opts.rtol,
            atol=opts.atol,
            max_step=opts.max_step_collar,
            dense_output=True,
            events=events,
        )
        if sol.status < 0:
            raise RuntimeError(f"collar integration failed: {sol.message}")

        t_end = float(sol.t[-1])
        segment = RaySegment("collar", "collar", t, t_end, chart, lambda tt: sol.sol(tt))
        self.segments.append(segment)
        if sol.status == 0:
            return t_total, "done", None

        t_b = sol.t_events[0][0] if len(sol.t_events[0]) else math.inf
        t_turn = sol.t_events[1][0] if len(sol.t_events[1]) else math.inf
        t_exit = (
            sol.t_events[2][0]
            if self.embeddable and len(sol.t_events[2])
            else math.inf
        )

        if t_exit <= min(t_b, t_turn):
            u = sol.y_events[2][0]
            p = PhasePoint(u[0], u[1], u[2], u[3])
            x, xi = chart.to_cartesian(p)
            if not self._log("exit_collar", t_exit, p, (float(x[0]), float(x[1]))):
                return t_exit, "done", None
            return t_exit, "free", (x, xi)

        if t_b <= t_turn:
            u = sol.y_events[0][0]
            contact = PhasePoint(0.0, u[1], u[2], u[3])
            return self.dispatch(t_b, chart, contact, t_total)

        # turning point: eta hits 0 and y is locally extremal there
        u = sol.y_events[1][0]
        if u[0] > opts.graze_tol:
            # perihelion above the boundary: nudge past the root and go on
            u2 = self._kick(chart, u)
            return t_turn + opts.kick, "collar", (chart, PhasePoint(*u2))
        if u[0] >= -opts.graze_tol:
            contact = PhasePoint(0.0, u[1], u[2], u[3])
            return self.dispatch(t_turn, chart, contact, t_total)
        # the step dipped below the boundary without an endpoint sign change;
        # locate the first actual crossing inside the accepted step
        idx = int(np.searchsorted(sol.t, t_turn)) - 1
        t_a = float(sol.t[max(idx, 0)])
        t_c = brentq(lambda s: sol.sol(s)[0], t_a, t_turn, xtol=1e-14)
        u_c = sol.sol(t_c)
        segment.t1 = t_c
        contact = PhasePoint(0.0, u_c[1], u_c[2], u_c[3])
        return self.dispatch(t_c, chart, contact, t_total)

    # -- contact dispatch ------------------------------------------------------

    def dispatch(self, t, chart, contact: PhasePoint, t_total):
        opts = self.opts
        cls = classify(
            chart,
            contact.xp,
            contact.xip,
            tol_g=opts.tol_g,
            tol_bracket=opts.tol_bracket,
            k_max=opts.k_max,
        )
        if cls.tag == HYPERBOLIC:
            out = reflect_hyperbolic(chart, contact, opts.tol_g)
            if not self._log("reflect", t, out, classification=cls):
                return t, "done", None
            return t, "collar", (chart, out)
        if cls.tag == GLANCING and not cls.unresolved:
            if cls.order == 2 and cls.sign == 1:
                out = PhasePoint(0.0, contact.xp, -contact.eta, contact.xip)
                if not self._log("diffract", t, out, classification=cls):
                    return t, "done", None
                if out.eta <= 0.0:
                    u = self._kick(chart, [0.0, out.xp, out.eta, out.xip])
                    return t + opts.kick, "collar", (chart, PhasePoint(*u))
                return t, "collar", (chart, out)
            start = PhasePoint(
                0.0, contact.xp, 0.0, _project_shell(chart, contact.xp, contact.xip)
            )
            if not self._log("glide_start", t, start, classification=cls):
                return t, "done", None
            return t, "glide", (chart, start)
        kind = "abort_unresolved" if cls.tag == GLANCING else "abort_elliptic"
        self._log(kind, t, contact, classification=cls)
        if self.status == "completed":
            self.status = "aborted_" + kind.split("_", 1)[1]
        return t, "done", None

    # -- gliding ---------------------------------------------------------------

    def run_glide(self, t, chart, pt, t_total):
        opts = self.opts
        ts = [t]
        xps = [pt.xp]
        xips = [pt.xip]
        released = None
        r1_prev = chart.r1(pt.xp, pt.xip)
        cur = pt
        t_cur = t
        while t_cur < t_total - 1e-12:
            h = min(opts.gliding_step, t_total - t_cur)
            nxt = step_gliding(chart, cur, h)
            r1_new = chart.r1(nxt.xp, nxt.xip)
            if r1_new > opts.tol_g:
                # release where the curvature condition crosses zero
                if r1_prev <= 0.0:

                    def f(s, _cur=cur):
                        q = step_gliding(chart, _cur, s) if s > 0 else _cur
                        return chart.r1(q.xp, q.xip)

                    s_star = brentq(f, 0.0, h, xtol=1e-13)
                else:
                    s_star = 0.0
                if s_star > 0:
                    cur = step_gliding(chart, cur, s_star)
                    t_cur += s_star
                    ts.append(t_cur)
                    xps.append(cur.xp)
                    xips.append(cur.xip)
                released = cur
                break
            cur = nxt
            t_cur += h
            r1_prev = r1_new
            ts.append(t_cur)
            xps.append(cur.xp)
            xips.append(cur.xip)

        if released is None:
            t_cur = max(t_cur, t_total)
        if len(ts) >= 2:
            d = np.array([_glide_field(chart, a, b) for a, b in zip(xps, xips)])
            sp_x = CubicHermiteSpline(np.asarray(ts), np.asarray(xps), d[:, 0])
            sp_k = CubicHermiteSpline(np.asarray(ts), np.asarray(xips), d[:, 1])

            def ev(tt):
                return np.array([0.0, float(sp_x(tt)), 0.0, float(sp_k(tt))])

        else:

            def ev(tt, _p=cur):
                return np.array([0.0, _p.xp, 0.0, _p.xip])

        self.segments.append(RaySegment("gliding", "collar", t, t_cur, chart, ev))
        if released is None:
            return t_total, "done", None
        if not self._log("glide_release", t_cur, released):
            return t_cur, "done", None
        u = self._kick(chart, [0.0, released.xp, 0.0, released.xip])
        return t_cur + opts.kick, "collar", (chart, PhasePoint(*u))

    # -- main loop ---------------------------------------------------------------

    def _place(self, x, xi):
        """Assign an ambient point to a collar band or the free region."""
        rho = float(np.hypot(x[0], x[1]))
        for ch, radius, side in self.bands:
            inside = rho >= radius - 1e-12 if side == "outer" else rho <= radius + 1e-12
            if inside:
                return "collar", (ch, ch.from_cartesian(x, xi))
        return "free", (x, xi)

    def run(self, start, t_total):
        t = 0.0
        if isinstance(start, PhasePoint):
            if self.embeddable and start.y > 0.5 * self.chart.collar_width:
                x, xi = self.chart.to_cartesian(start)
                mode, payload = self._place(np.asarray(x), np.asarray(xi))
            else:
                mode, payload = "collar", (self.chart, start)
        else:
            if not self.embeddable:
                raise ValueError("model charts take collar-frame start points")
            x = np.asarray(start[0], dtype=float)
            xi = np.asarray(start[1], dtype=float)
            mode, payload = self._place(x, xi)
        mode0, payload0 = mode, payload

        while t < t_total - 1e-15 and self.status == "completed":
            if mode == "free":
                t, ch, pt = self.run_free(t, payload[0], payload[1], t_total)
                if ch is None:
                    break
                mode, payload = "collar", (ch, pt)
            elif mode == "collar":
                ch, pt = payload
                self.active_chart = ch
                t, mode, payload = self.run_collar(t, ch, pt, t_total)
                if mode == "done":
                    break
            elif mode == "glide":
                ch, pt = payload
                self.active_chart = ch
                t, mode, payload = self.run_glide(t, ch, pt, t_total)
                if mode == "done":
                    break
            else:
                break

        if not self.segments:
            # nothing integrated (t_total = 0 or an immediate abort): expose
            # the start state through a zero-length segment
            if mode0 == "free":
                x0, xi0 = np.asarray(payload0[0]), np.asarray(payload0[1])
                u0 = np.concatenate([x0, xi0])
                self.segments.append(
                    RaySegment("free", "cartesian", 0.0, 0.0, None, lambda tt, _u=u0: _u)
                )
            else:
                ch0, p0 = payload0
                u0 = np.array([p0.y, p0.xp, p0.eta, p0.xip])
                self.segments.append(
                    RaySegment("collar", "collar", 0.0, 0.0, ch0, lambda tt, _u=u0: _u)
                )
        if self.status == "completed" and self.segments:
            last = self.segments[-1]
            u = last.evaluate(last.t1)
            if last.frame == "collar":
                self.active_chart = last.chart
                self._log("finish", last.t1, PhasePoint(u[0], u[1], u[2], u[3]))
            else:
                self._log("finish", last.t1, None, (float(u[0]), float(u[1])))
        return GeneralizedRay(
            self.chart,
            self.segments,
            self.events,
            self.status,
            self.opts,
            0.0,
            self.segments[-1].t1 if self.segments else 0.0,
        )


def trace(
    chart: CollarChart,
    start: Union[PhasePoint, tuple],
    t_total: float,
    options: Optional[TraceOptions] = None,
) -> GeneralizedRay:
    """Trace the generalized broken ray through `start` for time `t_total`.

    `start` is a PhasePoint in the chart's collar frame, or an (x, xi) pair
    in ambient coordinates for embeddable charts.  Negative times run the
    flow backward through the momentum-flip involution.
    """
    options = options or TraceOptions()
    if t_total < 0:
        if isinstance(start, PhasePoint):
            flipped = start.flipped()
        else:
            flipped = (
                np.asarray(start[0], dtype=float),
                -np.asarray(start[1], dtype=float),
            )
        fwd = _Tracer(chart, options).run(flipped, -t_total)
        return fwd._time_reversed()
    return _Tracer(chart, options).run(start, t_total)


def flow_pullback(
    chart: CollarChart,
    symbol: Callable,
    t: float,
    options: Optional[TraceOptions] = None,
) -> Callable:
    """Pull a phase-space function back along the flow: p -> symbol(flow_t(p)).

    The returned callable accepts either a PhasePoint or an (x, xi) pair and
    hands the evolved state to `symbol` in the same representation.
    """

    def pulled(*args):
        if len(args) == 1 and isinstance(args[0], PhasePoint):
            ray = trace(chart, args[0], t, options)
            return symbol(ray.final_collar())
        x, xi = args[0] if len(args) == 1 else args
        ray = trace(chart, (x, xi), t, options)
        xe, xie = ray.final_cartesian()
        return symbol(xe, xie)

    return pulled
