import math

import numpy as np
import pytest

from conftest import family_of, orbit_of
from reslat.dynamics import PhasePoint, build_system, default_guess, integrate
from reslat.errors import ReturnMapError, ShootingError
from reslat.orbits import (chebyshev_lobatto, continue_family, find_periodic_orbit,
                           make_section, poincare_return)


def test_return_map_model_center_manifold():
    s = build_system("model", mu=[1])
    p = PhasePoint.from_array([0.0, 0.0, 0.3, 0.0])
    sec = make_section(s, p)
    ret = poincare_return(s, sec, p)
    assert ret.time == pytest.approx(2 * math.pi, rel=1e-11)
    assert np.max(np.abs(s.wrap(ret.point.as_array() - p.as_array()))) < 1e-11


def test_return_map_model_expansion():
    s = build_system("model", mu=[1])
    eps = 1e-6
    base = PhasePoint.from_array([0.0, 0.0, 0.0, 0.0])
    sec = make_section(s, base)
    ret = poincare_return(s, sec, PhasePoint.from_array([0.0, eps, 0.0, 0.0]))
    assert ret.point.y[1] == pytest.approx(eps * math.exp(2 * math.pi), rel=1e-9)
    assert abs(ret.point.eta[1]) < 1e-15


def test_return_map_hyperboloid_circumference():
    s = build_system("hyperboloid_geodesic")
    p = default_guess(s, 0.5)  # unit speed: circumference 2 pi
    ret = poincare_return(s, make_section(s, p), p)
    assert ret.time == pytest.approx(2 * math.pi, rel=1e-10)


def test_return_map_errors():
    s = build_system("model", mu=[1])
    p = PhasePoint.from_array([0.0, 0.0, 0.0, 0.0])
    sec = make_section(s, p)
    with pytest.raises(ReturnMapError):
        poincare_return(s, sec, p, t_max=3.0)
    with pytest.raises(ReturnMapError):
        poincare_return(s, sec, PhasePoint.from_array([1.0, 0.0, 0.0, 0.0]))


def test_model_orbit():
    o = orbit_of("model", 0.3, (("mu", (1,)),))
    assert o.T == pytest.approx(2 * math.pi, rel=1e-12)
    z = o.start.as_array()
    assert abs(z[1]) < 1e-12 and abs(z[3]) < 1e-12 and z[2] == pytest.approx(0.3)


def test_hyperboloid_recovered_from_perturbation():
    s = build_system("hyperboloid_geodesic")
    exact = default_guess(s, 0.5).as_array()
    guess = exact + 1e-2 * np.array([1.0, 0.0, 1.0, 0.0])
    o = find_periodic_orbit(s, guess, 0.5)
    assert o.closure() < 1e-10
    assert abs(o.start.y[0]) < 1e-9 and abs(o.start.eta[0]) < 1e-9
    assert o.T == pytest.approx(2 * math.pi, rel=1e-10)


def test_coulomb_barrier_orbit():
    a = 1.0
    o = orbit_of("coulomb_stark", 2 * math.sqrt(a) + 0.2, (("a", a),))
    tr = integrate(o.system, o.start, o.T, tol=1e-12)
    assert np.max(np.abs(tr.end - o.start.as_array())) < 1e-9
    assert abs(o.system.eval0(o.start.as_array()) - o.E) < 1e-10
    # oscillation along the field axis through the saddle
    assert np.max(np.abs(o.trajectory.z[:, 1])) < 1e-9


def test_guess_too_far_in_energy():
    s = build_system("model", mu=[1])
    with pytest.raises(ShootingError):
        find_periodic_orbit(s, default_guess(s, 0.0), 0.5)


def test_model_family_period_constant():
    fam = family_of("model", 0.0, (-0.5, 0.5), 16, (("mu", (1,)),))
    assert len(fam.orbits) == 16
    assert np.all(np.diff(fam.energies) > 0)
    assert np.max(np.abs(fam.periods - 2 * math.pi)) < 1e-10


def test_hyperboloid_family_scaling():
    fam = family_of("hyperboloid_geodesic", 0.5, (0.3, 0.7))
    scaled = fam.periods * np.sqrt(2 * fam.energies) / (2 * math.pi)
    assert np.max(np.abs(scaled - 1)) < 1e-9


def test_degenerate_range_and_bad_node_count():
    seed = orbit_of("model", 0.0, (("mu", (1,)),))
    fam = continue_family(seed.system, seed, (0.0, 0.0))
    assert fam.orbits == [seed]
    with pytest.raises(ValueError):
        continue_family(seed.system, seed, (-0.1, 0.1), node_count=4)
    with pytest.raises(ValueError):
        continue_family(seed.system, seed, (0.1, 0.2))


def test_chebyshev_nodes_nest():
    a = chebyshev_lobatto(-1.0, 2.0, 9)
    b = chebyshev_lobatto(-1.0, 2.0, 17)
    assert np.all(np.diff(a) > 0)
    assert np.allclose(a, b[::2], atol=1e-15)
    assert a[0] == pytest.approx(-1.0) and a[-1] == pytest.approx(2.0)
