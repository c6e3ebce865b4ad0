import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reslat.action import (ActionModel, action_identity_defect, action_integral,
                           build_action_model, eval_action, subprincipal_integral)
from reslat.dynamics import build_system
from reslat.errors import ActionModelError, HypothesisError, ValidityError

from conftest import family_of, model_action, orbit_of, synthetic_model

HYP_WINDOW = (0.3, 0.7)


def hyperboloid_model(node_count=16):
    return build_action_model(family_of("hyperboloid_geodesic", 0.5, HYP_WINDOW, node_count))


# -- loop integrals ---------------------------------------------------------

def test_model_action_is_two_pi_e():
    for E in (-0.3, 0.0, 0.25):
        o = orbit_of("model", E, (("mu", (1.0,)),))
        assert action_integral(o) == pytest.approx(2 * math.pi * E, abs=1e-10)


def test_hyperboloid_action():
    o = orbit_of("hyperboloid_geodesic", 0.5)
    assert action_integral(o) == pytest.approx(2 * math.pi, rel=1e-10)


def test_subprincipal_one_gives_period():
    o = orbit_of("model", 0.2, (("mu", (1.0,)), ("h1", "1")))
    assert subprincipal_integral(o) == pytest.approx(o.T, rel=1e-12)


def test_subprincipal_tau_gives_action():
    o = orbit_of("model", 0.2, (("mu", (1.0,)), ("h1", "tau")))
    assert subprincipal_integral(o) == pytest.approx(2 * math.pi * 0.2, rel=1e-10)


def test_subprincipal_override_system():
    o = orbit_of("model", 0.2, (("mu", (1.0,)),))
    other = build_system("model", mu=(1.0,), h1="2")
    assert subprincipal_integral(o) == 0.0
    assert subprincipal_integral(o, other) == pytest.approx(2 * o.T, rel=1e-12)


# -- building the model -----------------------------------------------------

def test_model_family_fits():
    m = model_action((0.5 + 0.2j, 0.3j), K=1)
    assert m.kinds == ["hc", "ee"] and m.d == 3 and m.g == 0
    v = eval_action(m, 0.1 - 0.05j)
    assert v.S0 == pytest.approx(2 * math.pi * (0.1 - 0.05j), abs=1e-9)
    assert v.T == pytest.approx(2 * math.pi, abs=1e-9)
    expected = 2 * math.pi * np.array([0.5 + 0.2j, 0.5 - 0.2j, 0.3j])
    assert np.max(np.abs(v.M - expected)) < 1e-8
    assert np.max(np.abs(v.dM)) < 1e-7


def test_hyperboloid_model_matches_closed_form():
    m = hyperboloid_model()
    E = np.linspace(0.32, 0.68, 7)
    v = eval_action(m, E)
    assert np.max(np.abs(v.S0 - 2 * math.pi * np.sqrt(2 * E))) < 1e-8
    assert np.max(np.abs(v.T - 2 * math.pi / np.sqrt(2 * E))) < 1e-8
    assert np.max(np.abs(v.M[0] - 2 * math.pi)) < 1e-7
    assert action_identity_defect(m) < 1e-6 * 2 * math.pi / math.sqrt(0.6)


def test_hyperboloid_fit_converges_with_nodes():
    coarse, fine = hyperboloid_model(16), hyperboloid_model(31)
    E = np.linspace(0.3, 0.7, 41)
    exact = 2 * math.pi / np.sqrt(2 * E)
    err16 = np.max(np.abs(eval_action(coarse, E).T - exact))
    err31 = np.max(np.abs(eval_action(fine, E).T - exact))
    assert err31 < 1e-12 < err16 < 1e-9
    # off the axis node noise is amplified, both stay usable near the window
    Ec = E + 0.05j
    for m in (coarse, fine):
        assert np.max(np.abs(eval_action(m, Ec).T - 2 * math.pi / np.sqrt(2 * Ec))) < 1e-7


def test_node_hypothesis_failure_names_the_node():
    fam = family_of("model", 0.0, (-0.6, 0.6), 16, (("mu", (1.0, 1j / 3)),))
    with pytest.raises(HypothesisError) as info:
        build_action_model(fam, K=3)
    assert "nonres17" in str(info.value) and "E=" in str(info.value)
    assert isinstance(info.value, ActionModelError)
    assert build_action_model(fam, K=2).kinds == ["hr", "ee"]


def test_too_few_nodes():
    fam = family_of("model", 0.0, (-0.6, 0.6), 8, (("mu", (1.0,)),))
    short = type(fam)(orbits=fam.orbits[:5], energies=fam.energies[:5], window=fam.window)
    with pytest.raises(ActionModelError):
        build_action_model(short)


# -- evaluation -------------------------------------------------------------

def test_outside_window_raises():
    m = synthetic_model([2 * math.pi], ["hr"])
    with pytest.raises(ValidityError):
        eval_action(m, 0.7)
    with pytest.raises(ValidityError):
        eval_action(m, 0.1 + 0.31j)
    eval_action(m, 0.1 + 0.29j)
    eval_action(m, 0.7, check=False)


@settings(max_examples=50, deadline=None)
@given(st.floats(-0.6, 0.6), st.floats(-0.3, 0.3))
def test_schwarz_reflection(re, im):
    m = model_action((0.5 + 0.2j, 0.3j), K=1)
    E = complex(re, im)
    a, b = eval_action(m, E), eval_action(m, E.conjugate())
    assert abs(a.S0 - np.conj(b.S0)) < 1e-12 * (1 + abs(a.S0))
    assert abs(a.T - np.conj(b.T)) < 1e-12 * (1 + abs(a.T))
    # the loxodromic pair swaps, i*theta(E) reflects to -conj
    assert np.max(np.abs(a.M[[1, 0]] - np.conj(b.M[:2]))) < 1e-10
    assert abs(a.M[2] + np.conj(b.M[2])) < 1e-10


@settings(max_examples=30, deadline=None)
@given(st.lists(st.complex_numbers(max_magnitude=0.25), min_size=1, max_size=6))
def test_array_evaluation_matches_scalar(Es):
    m = synthetic_model([2 * math.pi * (0.5 + 0.2j), 2j * math.pi * 0.3], ["hc", "ee"],
                        I1=lambda E: 1 + E ** 2)
    arr = eval_action(m, np.array(Es))
    for i, E in enumerate(Es):
        one = eval_action(m, E)
        assert arr.S0[i] == pytest.approx(one.S0)
        assert arr.S1[i] == pytest.approx(one.S1)
        assert np.allclose(arr.M[:, i], one.M)


def test_s1_includes_index_half():
    m = synthetic_model([2j * math.pi * 1.4], ["ee"], g=1, I1=lambda E: 2 * math.pi * E)
    v = eval_action(m, 0.2)
    assert v.S1 == pytest.approx(-0.2 + 0.5, abs=1e-12)
    assert v.dS1 == pytest.approx(-1.0, abs=1e-10)


def test_json_round_trip():
    m = model_action((1.0,), K=10)
    back = ActionModel.from_json(m.to_json())
    assert back.to_json() == m.to_json()
    for key in m.fits:
        assert np.array_equal(m.fits[key], back.fits[key])
    E = 0.2 - 0.1j
    assert eval_action(back, E).S0 == eval_action(m, E).S0
