"""Spectral tensor grid on the unit disk.

Fourier differentiation in the angle, Chebyshev differentiation in the
radius.  The radial nodes are the positive half of a Lobatto grid of odd
degree, so there is no node at r = 0 and every smooth field on the disk
splits into angular modes whose radial profiles extend evenly or oddly
through the origin.  Differentiation uses that parity; quadrature uses
Clenshaw-Curtis style weights for the measure r dr.
"""

from __future__ import annotations

from functools import cached_property

import numpy as np
from numpy.polynomial import chebyshev as _cheb


def cheb_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix on Chebyshev-Lobatto nodes x_j = cos(j pi / N)."""
    n = len(x) - 1
    c = np.ones(n + 1)
    c[0] = c[n] = 2.0
    c = c * (-1.0) ** np.arange(n + 1)
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    # negative sum trick keeps rows exact on constants
    d -= np.diag(d.sum(axis=1))
    return d


def cheb_coeff_matrix(n: int) -> np.ndarray:
    """Map nodal values on the degree-n Lobatto grid to Chebyshev coefficients."""
    j = np.arange(n + 1)
    mat = np.cos(np.pi * np.outer(j, j) / n) * (2.0 / n)
    mat[:, 0] *= 0.5
    mat[:, -1] *= 0.5
    mat[0, :] *= 0.5
    mat[-1, :] *= 0.5
    return mat


def _abs_weight_moments(n: int) -> np.ndarray:
    """Moments of |x| against T_k on [-1, 1]."""
    mom = np.zeros(n + 1)
    for k in range(0, n + 1, 2):
        e = np.zeros(k + 1)
        e[k] = 1.0
        xe = _cheb.chebmulx(e)
        anti = _cheb.chebint(xe)
        mom[k] = 2.0 * (_cheb.chebval(1.0, anti) - _cheb.chebval(0.0, anti))
    return mom


class RadialHalfGrid:
    """K Chebyshev nodes in (0, 1], descending from r = 1.

    Profiles are differentiated via their even or odd extension through
    r = 0, and integrated against r dr with spectral accuracy.
    """

    def __init__(self, num_nodes: int):
        if num_nodes < 4:
            raise ValueError("need at least 4 radial nodes")
        self.K = int(num_nodes)
        self.N = 2 * self.K - 1
        j = np.arange(self.N + 1)
        self.x_full = np.cos(np.pi * j / self.N)
        self.r = self.x_full[: self.K]
        d_full = cheb_diff_matrix(self.x_full)
        cols = self.N - np.arange(self.K)
        self._d_direct = d_full[: self.K, : self.K]
        self._d_mirror = d_full[: self.K, cols]
        self.d_even = self._d_direct + self._d_mirror
        self.d_odd = self._d_direct - self._d_mirror
        coeff = cheb_coeff_matrix(self.N)
        w_full = coeff.T @ _abs_weight_moments(self.N)
        self.w_rdr = 0.5 * (w_full[: self.K] + w_full[cols])
        self._coeff = coeff

    def diff(self, prof: np.ndarray, parity: int) -> np.ndarray:
        """d/dr of radial profiles (first axis) with the given parity at 0."""
        d = self.d_even if parity > 0 else self.d_odd
        return d @ prof

    def coeffs(self, prof: np.ndarray, parity: int) -> np.ndarray:
        """Chebyshev coefficients of the parity extension of a profile."""
        # nodes K..N sit at -r_{K-1}, ..., -r_0
        full = np.concatenate([prof, float(parity) * prof[::-1]], axis=0)
        return self._coeff @ full

    def interp(self, prof: np.ndarray, parity: int, r_new: np.ndarray) -> np.ndarray:
        """Evaluate the spectral interpolant of a profile at new radii."""
        a = self.coeffs(prof, parity)
        return _cheb.chebval(np.asarray(r_new), a)

    def integrate_rdr(self, prof: np.ndarray) -> np.ndarray:
        """Integral over (0,1) against r dr for even-extendable profiles."""
        return np.tensordot(self.w_rdr, prof, axes=(0, 0))


class PolarGrid:
    """Tensor grid: K radii (descending from 1) by n_theta equispaced angles.

    Fields are arrays of shape (K, n_theta).  Angular transforms follow the
    numpy FFT layout; `mode_numbers` gives the integer frequency of each
    column of a transformed field.
    """

    def __init__(self, num_r: int, num_theta: int):
        if num_theta % 2 or num_theta < 4:
            raise ValueError("n_theta must be even and >= 4")
        self.radial = RadialHalfGrid(num_r)
        self.K = self.radial.K
        self.n_theta = int(num_theta)
        self.theta = 2.0 * np.pi * np.arange(self.n_theta) / self.n_theta
        self.r = self.radial.r
        self.modes = np.fft.fftfreq(self.n_theta, 1.0 / self.n_theta).astype(int)
        self._even_cols = (self.modes % 2) == 0
        self.R, self.T = np.meshgrid(self.r, self.theta, indexing="ij")
        self.X1 = self.R * np.cos(self.T)
        self.X2 = self.R * np.sin(self.T)
        self.dtheta_weight = 2.0 * np.pi / self.n_theta

    # -- transforms -------------------------------------------------

    def to_modes(self, field: np.ndarray) -> np.ndarray:
        return np.fft.fft(field, axis=1) / self.n_theta

    def from_modes(self, fhat: np.ndarray) -> np.ndarray:
        return np.fft.ifft(fhat * self.n_theta, axis=1)

    # -- calculus ---------------------------------------------------

    def _diff_modes(self, fhat: np.ndarray, extra_parity: int = 1) -> np.ndarray:
        """Radial derivative of angular-mode profiles, column by parity."""
        out = np.empty_like(fhat)
        ev = self._even_cols
        if extra_parity < 0:
            ev = ~ev
        out[:, ev] = self.radial.d_even @ fhat[:, ev]
        out[:, ~ev] = self.radial.d_odd @ fhat[:, ~ev]
        return out

    def dr(self, field: np.ndarray) -> np.ndarray:
        return self.from_modes(self._diff_modes(self.to_modes(field)))

    def dtheta(self, field: np.ndarray) -> np.ndarray:
        fhat = self.to_modes(field)
        return self.from_modes(1j * self.modes[None, :] * fhat)

    def laplacian(self, field: np.ndarray) -> np.ndarray:
        """Flat Laplacian, mode by mode: f'' + f'/r - n^2 f / r^2."""
        fhat = self.to_modes(field)
        d1 = self._diff_modes(fhat)
        d2 = self._diff_modes(d1, extra_parity=-1)
        rinv = 1.0 / self.r[:, None]
        out = d2 + rinv * d1 - (self.modes[None, :] ** 2) * rinv**2 * fhat
        return self.from_modes(out)

    def grad_cartesian(self, field: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        fhat = self.to_modes(field)
        fr = self.from_modes(self._diff_modes(fhat))
        ft_over_r = self.from_modes(
            1j * self.modes[None, :] * fhat / self.r[:, None]
        )
        ct, st = np.cos(self.T), np.sin(self.T)
        return ct * fr - st * ft_over_r, st * fr + ct * ft_over_r

    def div_cartesian(self, f1: np.ndarray, f2: np.ndarray) -> np.ndarray:
        d1, _ = self.grad_cartesian(f1)
        _, d2 = self.grad_cartesian(f2)
        return d1 + d2

    # -- measure ----------------------------------------------------

    def integrate(self, field: np.ndarray) -> complex:
        """Integral over the disk, Lebesgue measure r dr dtheta."""
        ang = field.sum(axis=1) * self.dtheta_weight
        return complex(self.radial.integrate_rdr(ang))

    def inner(self, f: np.ndarray, g: np.ndarray) -> complex:
        return self.integrate(f * np.conj(g))

    def norm(self, f: np.ndarray) -> float:
        return float(np.sqrt(max(self.integrate(np.abs(f) ** 2).real, 0.0)))

    def boundary_norm(self, f_boundary_row: np.ndarray) -> float:
        """L2 norm on the unit circle of a row sampled at the theta nodes."""
        return float(
            np.sqrt(np.sum(np.abs(f_boundary_row) ** 2) * self.dtheta_weight)
        )

    def interp_modes_radial(
        self, fhat_col: np.ndarray, mode: int, r_new: np.ndarray
    ) -> np.ndarray:
        parity = 1 if mode % 2 == 0 else -1
        return self.radial.interp(fhat_col, parity, r_new)
