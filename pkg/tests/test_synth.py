import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folin.span import BetaSet, CharPoly, char_from_roots, sample, solve_beta
from folin.synth import (ObserverLTI, UnstableObserverError, beta_from_observer, synthesize,
                         transform_eval, verify_output, verify_pde)
from folin.system import LTISystem

from conftest import CSTR_BETA0, CSTR_GAIN, RHO, CP, NEG_DH


@pytest.fixture(scope="module")
def dbl_model(dblint):
    return dblint.to_model()


def test_double_integrator_observer():
    obs = synthesize(char_from_roots([-3]), np.array([[3.0], [0.0]]))
    assert obs.A.tolist() == [[-3.0]]
    assert obs.B.tolist() == [[-9.0]]
    assert obs.C.tolist() == [[1.0]]
    assert obs.D.tolist() == [[3.0]]


def test_cstr_observer(cstr_observer):
    obs = cstr_observer
    np.testing.assert_allclose(obs.A, [[-0.02]], rtol=1e-12)
    np.testing.assert_allclose(obs.B, [[-CSTR_GAIN, CSTR_GAIN]], rtol=1e-8)
    assert obs.C.tolist() == [[1.0]]
    np.testing.assert_allclose(obs.D[0], CSTR_BETA0, rtol=1e-8, atol=1e-15)


def test_second_order_without_feedthrough():
    alpha = CharPoly((3.0, 2.0))
    beta = np.array([[0.0, 0.0], [1.0, 2.0], [4.0, 5.0]])
    obs = synthesize(alpha, beta)
    assert np.array_equal(obs.D, [[0.0, 0.0]])
    assert np.array_equal(obs.B, [[4.0, 5.0], [1.0, 2.0]])


def test_eigenvalues_match_roots():
    roots = [-1.0, -2.0 + 1j, -2.0 - 1j, -0.5]
    obs = synthesize(char_from_roots(roots), np.zeros((5, 1)))
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(obs.A)),
                               np.sort_complex(np.array(roots)), atol=1e-9)


def test_unstable_needs_flag():
    with pytest.raises(UnstableObserverError):
        synthesize(char_from_roots([0.5]), np.zeros((2, 1)))
    obs = synthesize(char_from_roots([0.5]), np.zeros((2, 1)), allow_unstable=True)
    assert obs.A[0, 0] == 0.5


def test_infeasible_betaset_rejected():
    bad = BetaSet(np.zeros((2, 1)), residual=0.3, tol=1e-8)
    with pytest.raises(ValueError, match="feasible"):
        synthesize(char_from_roots([-1]), bad)


def test_beta_row_count_checked():
    with pytest.raises(ValueError, match="β rows"):
        synthesize(char_from_roots([-1, -2]), np.zeros((2, 1)))


def test_beta_from_observer_first_order():
    obs = ObserverLTI(np.array([[-2.0]]), np.array([[1.5, -1.0]]), np.array([[1.0]]),
                      np.array([[0.25, 4.0]]), CharPoly((2.0,)), np.zeros((2, 2)))
    beta = beta_from_observer(obs, CharPoly((2.0,)))
    np.testing.assert_allclose(beta, [[0.25, 4.0], [1.5 + 0.5, -1.0 + 8.0]])


def test_beta_from_zero_observer():
    alpha = char_from_roots([-1.0, -2.0, -3.0])
    obs = synthesize(alpha, np.zeros((4, 2)))
    assert np.array_equal(beta_from_observer(obs, alpha), np.zeros((4, 2)))


@given(st.integers(1, 4), st.integers(1, 3), st.integers(0, 2**32 - 1))
@settings(max_examples=100, deadline=None)
def test_beta_round_trip(v, p, seed):
    rng = np.random.default_rng(seed)
    alpha = CharPoly(tuple(rng.uniform(-3, 3, size=v)))
    beta = rng.uniform(-5, 5, size=(v + 1, p))
    obs = synthesize(alpha, beta, allow_unstable=True)
    np.testing.assert_allclose(beta_from_observer(obs, alpha), beta, rtol=0, atol=1e-12)


def test_cstr_transform(cstr, cstr_observer):
    obs = cstr_observer
    gain = 2 * RHO * CP / NEG_DH
    for x in sample(cstr.box, 20, 5).points:
        T = transform_eval(cstr, obs.alpha, obs.beta, x)
        assert T[0] == pytest.approx(x[0] + x[1] + gain * x[2], rel=1e-12, abs=1e-12)


def test_transform_vanishes_when_functional_is_output():
    from folin.system import SystemModel
    m = SystemModel(states=["a", "b"], dynamics=["b", "-a^3"], outputs=["a", "b"],
                    functional="2*a", lower=[-1, -1], upper=[1, 1])
    alpha = char_from_roots([-1])
    beta = np.array([[2.0, 0.0], [2.0, 0.0]])
    for x in sample(m.box, 10, 0).points:
        assert transform_eval(m, alpha, beta, x)[0] == 0.0


def test_double_integrator_transform(dbl_model):
    obs = synthesize(char_from_roots([-3]), np.array([[3.0], [0.0]]))
    for x in sample(dbl_model.box, 10, 0).points:
        T = transform_eval(dbl_model, obs.alpha, obs.beta, x)
        assert T[0] == x[1] - 3 * x[0]


def test_verify_cstr(cstr, cstr_observer):
    obs = cstr_observer
    pts = sample(cstr.box, 100, 11).points
    pde = verify_pde(cstr, obs, obs.alpha, obs.beta, pts)
    out = verify_output(cstr, obs, obs.alpha, obs.beta, pts)
    assert pde.passed and pde.max_mismatch <= 1e-9
    assert out.passed and out.max_mismatch <= 1e-12


def test_verify_double_integrator(dbl_model):
    obs = synthesize(char_from_roots([-3]), np.array([[3.0], [0.0]]))
    pts = sample(dbl_model.box, 50, 0).points
    assert verify_pde(dbl_model, obs, obs.alpha, obs.beta, pts).max_mismatch <= 1e-15
    assert verify_output(dbl_model, obs, obs.alpha, obs.beta, pts).max_mismatch <= 1e-15


def test_pde_detects_perturbed_B(dbl_model):
    obs = synthesize(char_from_roots([-3]), np.array([[3.0], [0.0]]))
    bad = ObserverLTI(obs.A, obs.B + 1e-3, obs.C, obs.D, obs.alpha, obs.beta)
    pts = sample(dbl_model.box, 50, 0).points
    rep = verify_pde(dbl_model, bad, obs.alpha, obs.beta, pts)
    assert rep.max_mismatch >= 1e-4 and not rep.passed


def test_random_beta_fails_pde_but_not_output(cstr):
    rng = np.random.default_rng(3)
    alpha = char_from_roots([-0.02])
    beta = rng.normal(size=(2, 2)) * 1e-2
    obs = synthesize(alpha, beta)
    pts = sample(cstr.box, 50, 0).points
    assert not verify_pde(cstr, obs, alpha, beta, pts).passed
    assert verify_output(cstr, obs, alpha, beta, pts).passed


@pytest.mark.parametrize("seed", [0, 1])
def test_feasible_implies_verified(seed):
    from folin.system import SystemModel
    m = SystemModel(states=["x1", "x2", "x3"],
                    dynamics=["-x1 + x2", "-x2 + x3^2", "-2*x3 + sin(x3)"],
                    outputs=["x2", "x3"], functional="x1",
                    lower=[-1, -1, -1], upper=[1, 1, 1])
    alpha = char_from_roots([-1.0])
    b = solve_beta(m, sample(m.box, 60, seed), 1, alpha)
    assert b.feasible
    obs = synthesize(alpha, b)
    fresh = sample(m.box, 60, seed + 100).points
    assert verify_pde(m, obs, alpha, b, fresh, tol=10 * b.tol).passed
