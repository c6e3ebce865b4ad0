import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from reslat import floquet as fq
from reslat.errors import FloquetError
from reslat.symplectic import standard_j, symplectic_defect

from conftest import orbit_of


def rotation(theta):
    return expm(theta * standard_j(1))


def direct_sum(*blocks):
    """Direct sum of symplectic blocks given in their own ``(x, xi)`` ordering."""
    dims = [b.shape[0] // 2 for b in blocks]
    d = sum(dims)
    A = np.zeros((2 * d, 2 * d))
    off = 0
    for b, k in zip(blocks, dims):
        idx = np.r_[off:off + k, d + off:d + off + k]
        A[np.ix_(idx, idx)] = b
        off += k
    return A


def hc_matrix(M):
    return expm(fq._block_generator("hc", complex(M)))


def random_symplectic(rng, d, scale=0.3):
    S = rng.normal(scale=scale, size=(2 * d, 2 * d))
    return expm(standard_j(d) @ (S + S.T) / 2)


def exps_of(A):
    return fq.classify(fq.from_matrix(A))


# -- classification ---------------------------------------------------------

def test_hr_diag():
    (e,) = exps_of(np.diag([math.e, 1 / math.e]))
    assert e.kind == "hr"
    assert e.M == pytest.approx(1.0, abs=1e-12)


def test_hr_cat_map():
    (e,) = exps_of(np.array([[2.0, 1.0], [1.0, 1.0]]))
    assert e.kind == "hr"
    assert e.M.real == pytest.approx(math.log((3 + math.sqrt(5)) / 2), rel=1e-12)


def test_rotation_is_first_kind():
    (e,) = exps_of(rotation(0.6))
    assert e.kind == "ee"
    assert e.theta == pytest.approx(0.6, abs=1e-12)
    assert e.M == pytest.approx(0.6j, abs=1e-12)


def test_rotation_past_pi_keeps_angle():
    (e,) = exps_of(rotation(2 * math.pi * 0.7))
    assert e.theta == pytest.approx(2 * math.pi * 0.7, abs=1e-12)


def test_hc_quadruple():
    (e,) = exps_of(hc_matrix(0.5 + 0.2j))
    assert e.kind == "hc"
    assert e.M == pytest.approx(0.5 + 0.2j, abs=1e-12)
    assert len(e.modes) == 2 and e.modes[1] == e.M.conjugate()


def test_canonical_order_mixed():
    A = direct_sum(rotation(0.4), hc_matrix(0.3 + 0.1j), np.diag([2.0, 0.5]))
    exps = exps_of(A)
    assert [e.kind for e in exps] == ["hr", "hc", "ee"]
    assert [e.pair_index for e in exps] == [0, 1, 2]
    vals, kinds, _ = fq.modes(exps)
    assert len(vals) == 4 and kinds == ["hr", "hc", "hc", "ee"]


def test_negative_multiplier_rejected():
    with pytest.raises(FloquetError):
        exps_of(np.diag([-2.0, -0.5]))


def test_repeated_multipliers_rejected():
    with pytest.raises(FloquetError):
        exps_of(direct_sum(rotation(1.0), rotation(1.0)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_exponents_invariant_under_symplectic_conjugation(seed):
    rng = np.random.default_rng(seed)
    A = direct_sum(np.diag([3.0, 1 / 3.0]), rotation(1.1))
    P = random_symplectic(rng, 2)
    B = P @ A @ np.linalg.inv(P)
    for a, b in zip(exps_of(A), exps_of(B)):
        assert a.kind == b.kind
        assert abs(a.M - b.M) < 1e-8


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_multipliers_come_in_quadruples(seed, d):
    A = random_symplectic(np.random.default_rng(seed), d, scale=0.6)
    lam = np.linalg.eigvals(A)
    assert abs(np.prod(lam) - 1) < 1e-8
    assert abs(np.linalg.det(A) - 1) < 1e-8
    for l in lam:
        assert np.min(np.abs(lam - 1 / l)) < 1e-6 * max(1, abs(1 / l))
        assert np.min(np.abs(lam - np.conj(l))) < 1e-6 * max(1, abs(l))


# -- normal forms -----------------------------------------------------------

@pytest.mark.parametrize("A", [
    np.diag([math.e, 1 / math.e]),
    rotation(4.0),
    hc_matrix(0.5 + 0.2j),
    direct_sum(np.diag([2.0, 0.5]), rotation(2.5), hc_matrix(0.4 - 2.9j)),
], ids=["hr", "ee-past-pi", "hc", "mixed"])
def test_exp_of_log_recovers_monodromy(A):
    md = fq.from_matrix(A)
    assert fq.exp_log_defect(md) < 1e-12
    for blk in fq.block_normal_form(md):
        assert np.allclose(blk.form, -standard_j(blk.basis.shape[1] // 2) @ blk.generator)
        assert np.allclose(blk.form, blk.form.T)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_log_is_hamiltonian_after_conjugation(seed):
    P = random_symplectic(np.random.default_rng(seed), 2)
    A = direct_sum(np.diag([2.5, 0.4]), rotation(0.9))
    md = fq.from_matrix(P @ A @ np.linalg.inv(P))
    B = fq.log_monodromy(md)
    J = standard_j(2)
    # B is in sp(2d): J B symmetric
    assert np.max(np.abs(J @ B - (J @ B).T)) < 1e-8
    assert fq.exp_log_defect(md) < 1e-9


def test_stable_unstable_split():
    A = direct_sum(np.diag([3.0, 1 / 3.0]), rotation(0.7))
    P = random_symplectic(np.random.default_rng(7), 2)
    A = P @ A @ np.linalg.inv(P)
    fp, fm = fq.stable_unstable_split(fq.from_matrix(A))
    assert fq.invariance_residual(A, fp) < 1e-10
    assert fq.invariance_residual(A, fm) < 1e-10
    assert np.linalg.norm(A @ fp) == pytest.approx(3.0, rel=1e-8)
    assert np.linalg.norm(A @ fm) == pytest.approx(1 / 3.0, rel=1e-8)


def test_split_needs_hyperbolic_part():
    with pytest.raises(FloquetError):
        fq.stable_unstable_split(fq.from_matrix(rotation(0.7)))


# -- hypotheses -------------------------------------------------------------

def test_pi_rotation_fails_branch_condition():
    rep = fq.check_hypotheses(fq.from_matrix(rotation(math.pi)), K=2)
    assert not rep.no_nonpositive_real
    assert not rep.passed()


def test_double_pi_rotation_fails():
    rep = fq.check_hypotheses(fq.from_matrix(direct_sum(rotation(math.pi), rotation(math.pi))),
                              K=2)
    assert not rep.no_nonpositive_real
    assert not rep.distinct_exponents


def test_third_turn_resonates_at_three():
    A = direct_sum(np.diag([2.0, 0.5]), rotation(2 * math.pi / 3))
    md = fq.from_matrix(A)
    assert fq.check_hypotheses(md, K=2).passed()
    rep = fq.check_hypotheses(md, K=3)
    assert not rep.nonres17 and not rep.nonres18
    assert rep.nonres17_worst.k in [(0, 3), (0, -3)]
    assert rep.nonres17_worst.defect < 1e-12


def test_single_hr_is_nonresonant():
    rep = fq.check_hypotheses(fq.from_matrix(np.diag([math.e, 1 / math.e])), K=10)
    assert rep.passed()
    assert rep.nonres18_worst.defect == pytest.approx(1.0, rel=1e-9)


def test_diophantine_pair_passes():
    golden = (math.sqrt(5) - 1) / 2
    A = direct_sum(np.diag([math.e, 1 / math.e]), rotation(2 * math.pi * golden))
    rep = fq.check_hypotheses(fq.from_matrix(A), K=10)
    assert rep.passed(), rep.to_dict()


def test_pure_elliptic_not_partially_hyperbolic():
    rep = fq.check_hypotheses(fq.from_matrix(rotation(1.0)), K=4)
    assert not rep.partially_hyperbolic
    assert rep.failures() == ["partially_hyperbolic"]


def test_k_above_twenty_rejected():
    md = fq.from_matrix(np.diag([2.0, 0.5]))
    with pytest.raises(ValueError):
        fq.check_hypotheses(md, K=21)
    with pytest.raises(ValueError):
        fq.nonresonance_scan([1.0], 21)


def test_scan_threshold_scales_with_k():
    # 1e-9 off resonance at |k|_1 = 1: flagged with tol 1e-8, not with 1e-10
    M = np.array([2j * math.pi + 1e-9])
    assert not fq.nonresonance_scan(M, 1, tol_res=1e-8)[0]
    assert fq.nonresonance_scan(M, 1, tol_res=1e-10)[0]


# -- index ------------------------------------------------------------------

@pytest.mark.parametrize("omega,expected", [(0.3, 0), (1.4, 1), (2.7, 2), (0.9, 0)])
def test_winding_of_rotation_path(omega, expected):
    J = standard_j(1)
    T = 2 * math.pi
    exps = exps_of(expm(T * omega * J))
    assert fq.winding_index(lambda t: expm(t * omega * J), T, exps) == expected


def test_winding_of_hyperbolic_path_is_zero():
    S = np.array([[0.0, 1.0], [1.0, 0.0]])
    G = standard_j(1) @ S
    exps = exps_of(expm(G))
    assert fq.winding_index(lambda t: expm(t * G), 1.0, exps) == 0


def test_winding_of_mixed_path():
    G = direct_sum(np.diag([1.0, -1.0]), 2.7 * standard_j(1), 0.45 * standard_j(1))
    T = 2 * math.pi
    exps = exps_of(expm(T * G))
    assert fq.winding_index(lambda t: expm(t * G), T, exps) == 2


# -- orbit monodromies ------------------------------------------------------

def test_model_hr_monodromy():
    o = orbit_of("model", 0.0, (("mu", (1.0,)),))
    md = fq.monodromy(o)
    assert md.symplectic_defect() < 1e-9
    (e,) = fq.classify(md)
    assert e.kind == "hr" and e.M.real == pytest.approx(2 * math.pi, rel=1e-8)
    assert fq.conley_zehnder(o, md=md) == 0


@pytest.mark.parametrize("omega,g", [(0.3, 0), (1.4, 1)])
def test_model_ee_monodromy_and_index(omega, g):
    o = orbit_of("model", 0.0, (("mu", (1.0, omega * 1j)),))
    md = fq.monodromy(o)
    exps = fq.classify(md)
    assert exps[1].theta == pytest.approx((2 * math.pi * omega) % (2 * math.pi), abs=1e-8)
    assert fq.conley_zehnder(o, md=md) == g
    assert fq.conley_zehnder(o, grid=128, md=md) == g


def test_model_hc_monodromy():
    o = orbit_of("model", 0.0, (("mu", (0.5 + 0.2j,)),))
    md = fq.monodromy(o)
    (e,) = fq.classify(md)
    assert e.kind == "hc"
    assert e.M == pytest.approx(2 * math.pi * (0.5 + 0.2j), abs=1e-7)
    assert fq.exp_log_defect(md) < 1e-10


def test_hyperboloid_monodromy():
    o = orbit_of("hyperboloid_geodesic", 0.5)
    md = fq.monodromy(o)
    assert symplectic_defect(md.A) < 1e-9
    (e,) = fq.classify(md)
    assert e.kind == "hr" and e.M.real == pytest.approx(2 * math.pi, rel=1e-7)
