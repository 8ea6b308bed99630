"""Analytic quasimode families on the unit disk.

Two families, both exact eigenfunctions so every claimed property can be
checked to solver precision:

* scalar modes  u = c J_m(lam r) e^{i m theta}  with lam a zero of J_m,
  Dirichlet on the circle;
* divergence-free velocity pairs built from the stream function
  psi = c (J_m(lam r) - J_m(lam) r^m) e^{i m theta}  with lam a zero of
  J_{m+1}, which vanishes to second order on the circle (no-slip).  The
  companion pressure is a multiple of the harmonic polynomial r^m e^{i m
  theta}.

The semiclassical parameter of a mode is h = 1/lam.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv

from .polar import PolarGrid

__all__ = [
    "bessel_zero",
    "ModeSpec",
    "Quasimode",
    "laplace_disk_mode",
    "stokes_disk_mode",
]


def bessel_zero(m: int, k: int) -> float:
    """k-th positive zero of J_m, located by scan plus brentq polish.

    The scan step stays below pi because consecutive zeros of J_m are
    never closer than that.
    """
    if m < 0 or k < 1:
        raise ValueError("need m >= 0 and k >= 1")
    x = max(float(m), 1e-6)
    step = 1.5
    f_prev = jv(m, x)
    found = 0
    for _ in range(100_000):
        x_next = x + step
        f_next = jv(m, x_next)
        if f_prev == 0.0:
            found += 1
            if found == k:
                return x
        elif f_prev * f_next < 0.0:
            root = brentq(lambda t: jv(m, t), x, x_next, xtol=1e-14, rtol=8.9e-16)
            found += 1
            if found == k:
                return float(root)
        x, f_prev = x_next, f_next
    raise RuntimeError(f"zero scan for J_{m} did not reach index {k}")


@dataclass(frozen=True)
class ModeSpec:
    """Resolution request for a quasimode; None fields pick safe defaults."""

    kind: str
    m: int
    k: int
    num_r: Optional[int] = None
    num_theta: Optional[int] = None

    def resolve(self, lam: float):
        if self.kind not in ("laplace", "stokes"):
            raise ValueError(f"unknown mode kind {self.kind!r}")
        if self.m < 0 or self.k < 1:
            raise ValueError("need m >= 0 and k >= 1")
        num_r = self.num_r if self.num_r is not None else max(40, int(math.ceil(1.35 * lam)) + 16)
        num_theta = (
            self.num_theta
            if self.num_theta is not None
            else max(32, 4 * self.m + 16)
        )
        num_theta += num_theta % 2
        if num_r <= 4.0 * lam / math.pi:
            raise ValueError(
                f"num_r = {num_r} cannot resolve radial frequency lam = {lam:.3f};"
                f" need num_r > {4.0 * lam / math.pi:.1f}"
            )
        if num_theta <= 4 * self.m:
            raise ValueError(
                f"num_theta = {num_theta} cannot resolve angular frequency m = {self.m};"
                f" need num_theta > {4 * self.m}"
            )
        return num_r, num_theta


def _jv_deriv(m, x):
    if m == 0:
        return -jv(1, x)
    return 0.5 * (jv(m - 1, x) - jv(m + 1, x))


class Quasimode:
    """A sampled mode plus its closed-form evaluators.

    velocity has shape (ncomp, num_r, num_theta) with ncomp = 1 for the
    scalar family and 2 (cartesian components) for the velocity family;
    pressure is the companion scalar (None for the scalar family).
    """

    def __init__(self, kind, m, k, lam, grid, velocity, pressure, c, q_sign=1):
        self.kind = kind
        self.m = m
        self.k = k
        self.lam = lam
        self.h = 1.0 / lam
        self.grid = grid
        self.velocity = velocity
        self.pressure = pressure
        self.c = c
        self.q_sign = q_sign

    # -- closed-form evaluation ------------------------------------------

    def _polar(self, points):
        pts = np.asarray(points, dtype=float)
        rho = np.hypot(pts[..., 0], pts[..., 1])
        theta = np.arctan2(pts[..., 1], pts[..., 0])
        return rho, theta

    def eval_velocity(self, points) -> np.ndarray:
        """Closed-form velocity at ambient points, shape (..., ncomp)."""
        rho, theta = self._polar(points)
        m, lam, c = self.m, self.lam, self.c
        phase = np.exp(1j * m * theta)
        if self.kind == "laplace":
            return (c * jv(m, lam * rho) * phase)[..., None]
        jm_lam = jv(m, lam)
        F = c * (jv(m, lam * rho) - jm_lam * rho**m)
        dF = c * (lam * _jv_deriv(m, lam * rho) - jm_lam * m * rho ** max(m - 1, 0))
        with np.errstate(divide="ignore", invalid="ignore"):
            F_over_rho = np.where(rho > 1e-12, F / np.where(rho > 1e-12, rho, 1.0), 0.0)
        if m == 1:
            lim = c * (0.5 * lam - jv(1, lam))
            F_over_rho = np.where(rho > 1e-12, F_over_rho, lim)
        ct, st = np.cos(theta), np.sin(theta)
        # u = (d_2 psi, -d_1 psi) for psi = F(rho) e^{i m theta}
        ux = (st * dF + ct * 1j * m * F_over_rho) * phase
        uy = -(ct * dF - st * 1j * m * F_over_rho) * phase
        return np.stack([ux, uy], axis=-1)

    def eval_pressure(self, points) -> np.ndarray:
        """Closed-form rescaled pressure q = h * P at ambient points."""
        if self.kind != "stokes":
            raise ValueError("scalar modes carry no pressure")
        rho, theta = self._polar(points)
        m, lam, c = self.m, self.lam, self.c
        w_m = rho**m * np.exp(1j * m * theta)
        return self.q_sign * (-1j) * c * lam * jv(m, lam) * w_m

    # -- grid diagnostics ---------------------------------------------------

    def boundary_flux(self) -> np.ndarray:
        """h * (normal derivative of velocity) on the boundary nodes, from
        the sampled fields (spectral radial derivative, row r = 1)."""
        g = self.grid
        rows = [self.h * g.dr(comp)[0, :] for comp in self.velocity]
        return np.stack(rows, axis=0)

    def residual_report(self) -> dict:
        g = self.grid
        h = self.h
        out = {}
        if self.kind == "laplace":
            u = self.velocity[0]
            out["pde"] = g.norm(-(h * h) * g.laplacian(u) - u)
            out["boundary"] = g.boundary_norm(u[0, :])
            out["normalization"] = abs(g.norm(u) - 1.0)
        else:
            ux, uy = self.velocity
            qx, qy = g.grad_cartesian(self.pressure)
            rx = -(h * h) * g.laplacian(ux) - ux + h * qx
            ry = -(h * h) * g.laplacian(uy) - uy + h * qy
            out["momentum"] = math.hypot(g.norm(rx), g.norm(ry))
            out["divergence"] = g.norm(g.div_cartesian(ux, uy))
            out["boundary"] = max(g.boundary_norm(ux[0, :]), g.boundary_norm(uy[0, :]))
            nrm = math.hypot(g.norm(ux), g.norm(uy))
            out["normalization"] = abs(nrm - 1.0)
        flux = self.boundary_flux()
        out["flux_norm"] = math.sqrt(
            sum(g.boundary_norm(row) ** 2 for row in flux)
        )
        return out


def laplace_disk_mode(m: int, k: int, num_r=None, num_theta=None) -> Quasimode:
    """Dirichlet eigenmode of the scalar problem, unit L2 norm."""
    spec = ModeSpec("laplace", m, k, num_r, num_theta)
    lam = bessel_zero(m, k)
    K, N = spec.resolve(lam)
    grid = PolarGrid(K, N)
    c = 1.0 / (math.sqrt(math.pi) * abs(jv(m + 1, lam)))
    profile = c * jv(m, lam * grid.r)
    u = profile[:, None] * np.exp(1j * m * grid.theta)[None, :]
    return Quasimode("laplace", m, k, lam, grid, np.stack([u]), None, c)


def stokes_disk_mode(m: int, k: int, num_r=None, num_theta=None) -> Quasimode:
    """No-slip divergence-free eigenmode pair (velocity, rescaled pressure).

    The pressure sign is fixed empirically by minimizing the momentum
    residual on the grid, which guards the orientation convention.
    """
    spec = ModeSpec("stokes", m, k, num_r, num_theta)
    lam = bessel_zero(m + 1, k)
    K, N = spec.resolve(lam)
    grid = PolarGrid(K, N)
    c = 1.0 / (math.sqrt(math.pi) * lam * abs(jv(m, lam)))

    jm_lam = jv(m, lam)
    F = c * (jv(m, lam * grid.r) - jm_lam * grid.r**m)
    psi = F[:, None] * np.exp(1j * m * grid.theta)[None, :]
    g1, g2 = grid.grad_cartesian(psi)
    velocity = np.stack([g2, -g1])

    w_m = grid.r[:, None] ** m * np.exp(1j * m * grid.theta)[None, :]
    q = -1j * c * lam * jm_lam * w_m

    mode = Quasimode("stokes", m, k, lam, grid, velocity, q, c, q_sign=1)
    alt = Quasimode("stokes", m, k, lam, grid, velocity, -q, c, q_sign=-1)
    if alt.residual_report()["momentum"] < mode.residual_report()["momentum"]:
        mode = alt
    return mode
