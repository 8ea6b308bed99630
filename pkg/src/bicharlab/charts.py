"""Collar charts near a boundary component and the glancing function r.

A chart carries boundary-normal coordinates (y, x') with y >= 0 the
distance into the domain and x' the boundary coordinate, together with
the function

    r(y, x', xi') = 1 - |xi'|^2_g(y)

whose boundary trace r0 separates transversal (r0 > 0) from shadowed
(r0 < 0) covectors, and whose normal derivative r1 = dr/dy at y = 0
measures the curvature felt by a tangent ray.  Interior motion at unit
energy is the Hamilton flow of eta^2 - r.

Three chart families are provided: the unit disk, either component of a
round annulus, and "model" charts whose r is an explicit polynomial in
(y, z1, zeta1) given by a coefficient table.  Disk and annulus return
closed-form derivatives; model charts differentiate the polynomial
exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.signal import convolve2d


class OutOfCollarError(ValueError):
    """Evaluation requested outside the chart's collar 0 <= y <= width."""


class OrderBudgetError(ValueError):
    """A derivative of higher order than the chart supports was requested."""


@dataclass(frozen=True)
class PhasePoint:
    """Point in collar phase space: (y, x', eta, xi')."""

    y: float
    xp: float
    eta: float
    xip: float

    def flipped(self) -> "PhasePoint":
        """Time-reversal involution: momenta change sign."""
        return PhasePoint(self.y, self.xp, -self.eta, -self.xip)


@dataclass(frozen=True)
class RJet:
    """Value and first derivatives of r at a phase point."""

    r: float
    dr_dy: float
    dr_dxp: float
    dr_dxip: float


class CollarChart:
    """Base interface; concrete charts fill in the r data."""

    kind = "abstract"
    collar_width: float
    max_derivative_order: int

    # -- required geometry ------------------------------------------

    def _jet_any_y(self, y: float, xp: float, xip: float) -> RJet:
        raise NotImplementedError

    def r0(self, xp: float, xip: float) -> float:
        return self._jet_any_y(0.0, xp, xip).r

    def r1(self, xp: float, xip: float) -> float:
        return self._jet_any_y(0.0, xp, xip).dr_dy

    # -- public evaluation -------------------------------------------

    def eval_r(self, y: float, xp: float, xip: float) -> RJet:
        """r and its first derivatives; y must lie in the collar."""
        if not 0.0 <= y <= self.collar_width * (1.0 + 1e-12):
            raise OutOfCollarError(
                f"y = {y} outside collar [0, {self.collar_width}] of {self.kind} chart"
            )
        return self._jet_any_y(y, xp, xip)

    def iterated_bracket(self, j: int, xp: float, xip: float) -> float:
        """j-fold Hamilton bracket of r0 applied to r1 on the boundary.

        j = 0 returns r1 itself.  The bracket H_{r0} f = (dr0/dxi') df/dx'
        - (dr0/dx') df/dxi' is iterated with exact derivatives where the
        chart provides them and nested central differences otherwise.
        """
        if j < 0:
            raise ValueError("bracket order must be >= 0")
        if j > self.max_derivative_order - 2:
            raise OrderBudgetError(
                f"bracket order {j} exceeds budget K-2 = {self.max_derivative_order - 2}"
            )
        return self._bracket(j, xp, xip)

    def _bracket(self, j: int, xp: float, xip: float) -> float:
        return bracket_fd(self, j, xp, xip)

    def on_shell_defect(self, p: PhasePoint) -> float:
        return abs(p.eta**2 - self._jet_any_y(p.y, p.xp, p.xip).r)


def hamiltonian_field(chart: CollarChart, p: PhasePoint) -> tuple[float, float, float, float]:
    """Interior ray velocity (dy, dx', deta, dxi')/ds for eta^2 - r."""
    jet = chart.eval_r(p.y, p.xp, p.xip)
    return (2.0 * p.eta, -jet.dr_dxip, jet.dr_dy, jet.dr_dxp)


def iterated_bracket(chart: CollarChart, j: int, xp: float, xip: float) -> float:
    return chart.iterated_bracket(j, xp, xip)


def bracket_fd(chart: CollarChart, j: int, xp: float, xip: float, h_fd: float = 1e-4) -> float:
    """Generic bracket by nested central differences, one Richardson level."""

    def rec(order: int, a: float, b: float) -> float:
        if order == 0:
            return chart.r1(a, b)

        def dxp(f, a, b, h):
            return (f(a + h, b) - f(a - h, b)) / (2 * h)

        def dxip(f, a, b, h):
            return (f(a, b + h) - f(a, b - h)) / (2 * h)

        def richardson(d):
            return (4.0 * d(h_fd / 2) - d(h_fd)) / 3.0

        g = lambda u, v: rec(order - 1, u, v)
        g_x = richardson(lambda h: dxp(g, a, b, h))
        g_xi = richardson(lambda h: dxip(g, a, b, h))
        r0_x = richardson(lambda h: dxp(chart.r0, a, b, h))
        r0_xi = richardson(lambda h: dxip(chart.r0, a, b, h))
        return r0_xi * g_x - r0_x * g_xi

    return rec(j, xp, xip)


# ----------------------------------------------------------------------
# round charts


class DiskChart(CollarChart):
    """Unit disk, collar at the circle r = 1; y = 1 - |x|, x' the angle.

    The boundary metric pulled to the collar gives |xi'|^2_g = xi'^2/(1-y)^2,
    hence r = 1 - xi'^2/(1-y)^2 in closed form.
    """

    kind = "disk"

    def __init__(self, collar_width: float = 0.35, max_derivative_order: int = 8):
        if not 0.0 < collar_width < 1.0:
            raise ValueError("collar width must lie in (0, 1)")
        self.collar_width = float(collar_width)
        self.max_derivative_order = int(max_derivative_order)

    def _jet_any_y(self, y, xp, xip):
        s = 1.0 - y
        return RJet(
            r=1.0 - xip**2 / s**2,
            dr_dy=-2.0 * xip**2 / s**3,
            dr_dxp=0.0,
            dr_dxip=-2.0 * xip / s**2,
        )

    def _bracket(self, j, xp, xip):
        # r0 and r1 depend on xi' alone, so the bracket vanishes identically
        if j == 0:
            return -2.0 * xip**2
        return 0.0

    # metric data used by the boundary-layer machinery
    def alpha(self, y: float) -> float:
        return (1.0 - y) ** -2

    def sqrt_g(self, y: float) -> float:
        return 1.0 - y

    def curvature_h(self, y: float) -> float:
        """d/dy of log sqrt(det g)."""
        return -1.0 / (1.0 - y)

    def lam_jet(self, y, xip):
        """|xi'|_g and its first two y-derivatives (vectorized)."""
        s = 1.0 - np.asarray(y)
        a = np.abs(xip)
        return a / s, a / s**2, 2.0 * a / s**3

    # embedding ------------------------------------------------------

    def to_cartesian(self, p: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
        rho = 1.0 - p.y
        if rho < 0.0:
            raise ValueError("point beyond the disk center")
        ct, st = math.cos(p.xp), math.sin(p.xp)
        rhat = np.array([ct, st])
        that = np.array([-st, ct])
        if rho == 0.0:
            if p.xip != 0.0:
                raise ValueError("cannot place an angular covector at the center")
            return np.zeros(2), -p.eta * rhat
        x = np.array([rho * ct, rho * st])
        xi = -p.eta * rhat + (p.xip / rho) * that
        return x, xi

    def from_cartesian(self, x: Sequence[float], xi: Sequence[float]) -> PhasePoint:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        rho = float(np.hypot(x[0], x[1]))
        if rho < 1e-12:
            # the angle degenerates at the center; align it with the covector so
            # the covector is purely radial in the chart
            theta = math.atan2(xi[1], xi[0]) if float(xi @ xi) > 0 else 0.0
            return PhasePoint(1.0, theta, -float(np.hypot(xi[0], xi[1])), 0.0)
        theta = math.atan2(x[1], x[0])
        rhat = x / rho
        that = np.array([-rhat[1], rhat[0]])
        return PhasePoint(1.0 - rho, theta, -float(xi @ rhat), rho * float(xi @ that))


class AnnulusChart(CollarChart):
    """Round annulus rho_in < |x| < 1; collar at the selected component."""

    kind = "annulus"

    def __init__(
        self,
        rho_in: float,
        component: str = "outer",
        collar_width: float | None = None,
        max_derivative_order: int = 8,
    ):
        if not 0.0 < rho_in < 1.0:
            raise ValueError("inner radius must lie in (0, 1)")
        if component not in ("inner", "outer"):
            raise ValueError("component must be 'inner' or 'outer'")
        self.rho_in = float(rho_in)
        self.component = component
        gap = 1.0 - rho_in
        self.collar_width = float(collar_width) if collar_width else 0.4 * gap
        if not 0.0 < self.collar_width < gap:
            raise ValueError("collar width must be positive and below the gap width")
        self.max_derivative_order = int(max_derivative_order)

    def _rho(self, y: float) -> float:
        if self.component == "outer":
            return 1.0 - y
        return self.rho_in + y

    def _jet_any_y(self, y, xp, xip):
        sgn = -1.0 if self.component == "outer" else 1.0
        rho = self._rho(y)
        return RJet(
            r=1.0 - xip**2 / rho**2,
            dr_dy=sgn * 2.0 * xip**2 / rho**3,
            dr_dxp=0.0,
            dr_dxip=-2.0 * xip / rho**2,
        )

    def _bracket(self, j, xp, xip):
        if j == 0:
            sgn = -1.0 if self.component == "outer" else 1.0
            return sgn * 2.0 * xip**2 / self._rho(0.0) ** 3
        return 0.0

    def alpha(self, y: float) -> float:
        return self._rho(y) ** -2

    def sqrt_g(self, y: float) -> float:
        return self._rho(y)

    def curvature_h(self, y: float) -> float:
        sgn = -1.0 if self.component == "outer" else 1.0
        return sgn / self._rho(y)

    def lam_jet(self, y, xip):
        rho = np.asarray(self._rho(np.asarray(y)))
        a = np.abs(xip)
        sgn = -1.0 if self.component == "outer" else 1.0
        return a / rho, -sgn * a / rho**2, 2.0 * a / rho**3

    def to_cartesian(self, p: PhasePoint) -> tuple[np.ndarray, np.ndarray]:
        rho = self._rho(p.y)
        ct, st = math.cos(p.xp), math.sin(p.xp)
        x = np.array([rho * ct, rho * st])
        rhat = np.array([ct, st])
        that = np.array([-st, ct])
        nsign = -1.0 if self.component == "outer" else 1.0
        xi = nsign * p.eta * rhat + (p.xip / rho) * that
        return x, xi

    def from_cartesian(self, x, xi) -> PhasePoint:
        x = np.asarray(x, dtype=float)
        xi = np.asarray(xi, dtype=float)
        rho = float(np.hypot(x[0], x[1]))
        theta = math.atan2(x[1], x[0])
        rhat = x / rho
        that = np.array([-rhat[1], rhat[0]])
        nsign = -1.0 if self.component == "outer" else 1.0
        y = 1.0 - rho if self.component == "outer" else rho - self.rho_in
        return PhasePoint(y, theta, nsign * float(xi @ rhat), rho * float(xi @ that))

    def other_component(self) -> "AnnulusChart":
        other = "inner" if self.component == "outer" else "outer"
        return AnnulusChart(
            self.rho_in, other, self.collar_width, self.max_derivative_order
        )


# ----------------------------------------------------------------------
# polynomial model charts


def _poly_eval2(c: np.ndarray, z: float, zeta: float) -> float:
    # c[a, b] multiplies z^a zeta^b
    zp = z ** np.arange(c.shape[0])
    wp = zeta ** np.arange(c.shape[1])
    return float(zp @ c @ wp)


def _poly_diff2(c: np.ndarray, axis: int) -> np.ndarray:
    if c.shape[axis] == 1:
        return np.zeros((1, 1))
    if axis == 0:
        return c[1:, :] * np.arange(1, c.shape[0])[:, None]
    return c[:, 1:] * np.arange(1, c.shape[1])[None, :]


class ModelChart(CollarChart):
    """Abstract collar with polynomial r; used to stage higher-order contact.

    `terms` lists (pow_z1, pow_zeta1, pow_y, coeff); r0 is the y^0 slice,
    r1 the y^1 slice.  There is no ambient domain, so y is unrestricted
    below `collar_width` and no Euclidean embedding exists.
    """

    kind = "model"

    def __init__(
        self,
        terms: Sequence[tuple[int, int, int, float]],
        collar_width: float = 1.0,
        max_derivative_order: int = 8,
    ):
        if not terms:
            raise ValueError("model chart needs at least one term")
        amax = max(t[0] for t in terms)
        bmax = max(t[1] for t in terms)
        cmax = max(t[2] for t in terms)
        for t in terms:
            if len(t) != 4 or min(t[0], t[1], t[2]) < 0:
                raise ValueError(f"bad term {t!r}: need (pow_z1, pow_zeta1, pow_y, coeff)")
        coef = np.zeros((amax + 1, bmax + 1, cmax + 1))
        for a, b, cy, v in terms:
            coef[int(a), int(b), int(cy)] += float(v)
        self.coef = coef
        self.terms = tuple((int(a), int(b), int(cy), float(v)) for a, b, cy, v in terms)
        self.collar_width = float(collar_width)
        self.max_derivative_order = int(max_derivative_order)
        self._r0_poly = coef[:, :, 0]
        self._r1_poly = coef[:, :, 1] if coef.shape[2] > 1 else np.zeros((1, 1))

    def eval_r(self, y, xp, xip):
        # model charts carry no ambient domain: any y is meaningful
        return self._jet_any_y(y, xp, xip)

    def _jet_any_y(self, y, xp, xip):
        ypow = y ** np.arange(self.coef.shape[2])
        c2 = self.coef @ ypow  # collapse y axis -> (z, zeta) table
        dy_w = np.arange(self.coef.shape[2]) * y ** np.maximum(
            np.arange(self.coef.shape[2]) - 1, 0
        )
        dy_w[0] = 0.0
        c2_dy = self.coef @ dy_w
        return RJet(
            r=_poly_eval2(c2, xp, xip),
            dr_dy=_poly_eval2(c2_dy, xp, xip),
            dr_dxp=_poly_eval2(_poly_diff2(c2, 0), xp, xip),
            dr_dxip=_poly_eval2(_poly_diff2(c2, 1), xp, xip),
        )

    def r0(self, xp, xip):
        return _poly_eval2(self._r0_poly, xp, xip)

    def r1(self, xp, xip):
        return _poly_eval2(self._r1_poly, xp, xip)

    def _bracket(self, j, xp, xip):
        return _poly_eval2(self._bracket_poly(j), xp, xip)

    def _bracket_poly(self, j: int) -> np.ndarray:
        g = self._r1_poly
        dz_r0 = _poly_diff2(self._r0_poly, 0)
        dzeta_r0 = _poly_diff2(self._r0_poly, 1)
        for _ in range(j):
            g = convolve2d(dzeta_r0, _poly_diff2(g, 0)) - convolve2d(
                dz_r0, _poly_diff2(g, 1)
            )
        return g


# ----------------------------------------------------------------------
# loading


def load_chart(spec: str | dict) -> CollarChart:
    """Build a chart from a shorthand string or a parsed definition.

    Strings: "disk", "disk:WIDTH", "annulus:RHO_IN:inner|outer", or a path
    to a JSON definition file.  Dicts use the same keys as the files:
    {"kind": "model", "terms": [[pow_z1, pow_zeta1, pow_y, coeff], ...]}.
    """
    if isinstance(spec, dict):
        return _chart_from_dict(spec)
    s = str(spec)
    if s == "disk" or s.startswith("disk:"):
        parts = s.split(":")
        width = float(parts[1]) if len(parts) > 1 else 0.35
        return DiskChart(collar_width=width)
    if s.startswith("annulus:"):
        parts = s.split(":")
        rho = float(parts[1])
        comp = parts[2] if len(parts) > 2 else "outer"
        return AnnulusChart(rho, comp)
    with open(s) as fh:
        return _chart_from_dict(json.load(fh))


def _chart_from_dict(d: dict) -> CollarChart:
    kind = d.get("kind")
    if kind == "disk":
        return DiskChart(
            collar_width=d.get("collar_width", 0.35),
            max_derivative_order=d.get("max_derivative_order", 8),
        )
    if kind == "annulus":
        return AnnulusChart(
            d["rho_in"],
            d.get("component", "outer"),
            d.get("collar_width"),
            d.get("max_derivative_order", 8),
        )
    if kind == "model":
        return ModelChart(
            [tuple(t) for t in d["terms"]],
            collar_width=d.get("collar_width", 1.0),
            max_derivative_order=d.get("max_derivative_order", 8),
        )
    raise ValueError(f"unknown chart kind {kind!r}")
