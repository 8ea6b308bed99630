import numpy as np
import pytest

from bicharlab.billiard import (
    angular_momentum,
    chord_rotation,
    propagate,
    specular_reflect,
    time_to_boundary,
)


def test_diameter_period():
    x, xi, nb = propagate([-1.0, 0.0], [1.0, 0.0], 2.0)
    assert np.allclose(x, [-1.0, 0.0], atol=1e-12)
    assert np.allclose(xi, [1.0, 0.0], atol=1e-12)
    assert nb == 2


def test_conserved_quantities():
    rng = np.random.default_rng(5)
    x = rng.uniform(-0.6, 0.6, size=(60, 2))
    ang = rng.uniform(0, 2 * np.pi, size=60)
    xi = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    L0 = angular_momentum(x, xi)
    xt, xit, nb = propagate(x, xi, 11.3)
    assert nb.min() >= 5
    assert np.max(np.abs(angular_momentum(xt, xit) - L0)) < 1e-11
    assert np.max(np.abs(np.sum(xit**2, axis=-1) - 1.0)) < 1e-11
    assert np.max(np.sum(xt**2, axis=-1)) <= 1.0 + 1e-12


def test_chord_rotation_formula():
    for beta in (0.2, 0.7, 1.2, -0.9):
        x0 = np.array([1.0, 0.0])
        xi0 = np.array([-np.cos(beta), np.sin(beta)])
        ell = angular_momentum(x0, xi0)
        t_chord = float(time_to_boundary(x0, xi0))
        assert t_chord == pytest.approx(np.sqrt(1 - ell**2), abs=1e-14)
        x1, xi1, nb = propagate(x0, xi0, t_chord + 1e-9)
        assert nb == 1
        theta1 = np.arctan2(x1[1], x1[0])
        want = chord_rotation(ell)
        assert abs(np.angle(np.exp(1j * (theta1 - want)))) < 1e-7


def test_inscribed_square_orbit():
    beta = np.pi / 4
    x0 = np.array([1.0, 0.0])
    xi0 = np.array([-np.cos(beta), np.sin(beta)])
    period = 4 * np.sqrt(1 - angular_momentum(x0, xi0) ** 2)
    x1, xi1, nb = propagate(x0, xi0, float(period))
    assert np.allclose(x1, x0, atol=1e-10)


def test_batch_matches_scalar():
    rng = np.random.default_rng(9)
    x = rng.uniform(-0.5, 0.5, size=(25, 2))
    xi = rng.normal(size=(25, 2))
    xt, xit, nb = propagate(x, xi, 3.7)
    for i in range(25):
        xi_, xii_, nbi = propagate(x[i], xi[i], 3.7)
        assert np.allclose(xt[i], xi_, atol=1e-12)
        assert np.allclose(xit[i], xii_, atol=1e-12)
        assert nb[i] == nbi


def test_time_reversal():
    rng = np.random.default_rng(13)
    x = rng.uniform(-0.5, 0.5, size=(20, 2))
    xi = rng.normal(size=(20, 2))
    xt, xit, _ = propagate(x, xi, 2.9)
    xb, xib, _ = propagate(xt, xit, -2.9)
    assert np.max(np.abs(xb - x)) < 1e-10
    assert np.max(np.abs(xib - xi)) < 1e-10


def test_reflection_is_involutive():
    rng = np.random.default_rng(17)
    ang = rng.uniform(0, 2 * np.pi, size=30)
    x = np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    xi = rng.normal(size=(30, 2))
    assert np.allclose(specular_reflect(x, specular_reflect(x, xi)), xi, atol=1e-14)


def test_tangent_ray_rejected():
    with pytest.raises(RuntimeError):
        propagate([1.0, 0.0], [0.0, 1.0], 1.0)


def test_pinned_rays_mark_and_freeze():
    x = np.array([[1.0, 0.0], [0.3, 0.1]])
    xi = np.array([[0.0, 1.0], [0.4, -0.2]])
    with pytest.raises(RuntimeError, match="pinned"):
        propagate(x, xi, 1.0)
    xt, xit, nb, stuck = propagate(x, xi, 1.0, pinned="mark")
    assert stuck.tolist() == [True, False]
    assert nb[0] == 0
    # the pinned ray stays at its tangential contact point
    assert np.abs(xt[0] - x[0]).max() < 1e-12
    # the regular ray is unaffected by sharing the batch
    x1, xi1, n1 = propagate(x[1], xi[1], 1.0)
    assert np.abs(xt[1] - x1).max() < 1e-14
    assert np.abs(xit[1] - xi1).max() < 1e-14
    assert nb[1] == n1


def test_pinned_option_validated():
    with pytest.raises(ValueError, match="pinned"):
        propagate(np.array([0.0, 0.0]), np.array([1.0, 0.0]), 1.0, pinned="ignore")
