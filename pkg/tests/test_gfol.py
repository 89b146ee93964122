import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from folin.gfol import (GeneralSpec, InversionError, NotInvertibleError, check_monotone,
                        invert_G, synthesize_general, transform_general,
                        transform_general_with_derivative, verify_71)
from folin.lti import design_corollary
from folin.span import CharPoly, char_from_roots, sample
from folin.synth import UnstableObserverError, transform_eval
from folin.system import LTISystem

from conftest import random_observable


def test_example75_identity_holds(ex75, ex75_spec):
    rep = verify_71(ex75, ex75_spec, sample(ex75.box, 200, 0).points)
    assert rep.passed and rep.max_mismatch <= 1e-10


def test_sign_flip_detected(ex75):
    spec = GeneralSpec(CharPoly((1.0,)), 1, "z - y1^2", ["y1^3"], inverse="zeta + y1^2")
    pts = sample(ex75.box, 200, 0).points
    rep = verify_71(ex75, spec, pts)
    assert not rep.passed
    # both sides are ∓x3^6, so the mismatch is twice the largest |y^3|
    y3 = max(abs(ex75.H(x.tolist())[0]) ** 3 for x in pts)
    assert rep.max_mismatch == pytest.approx(2 * y3, rel=1e-12)


def test_example75_observer(ex75_spec):
    obs = synthesize_general(ex75_spec)
    assert obs.A.tolist() == [[-1.0]] and obs.C.tolist() == [[1.0]]
    for y in (-0.7, 0.0, 0.4, 2.0):
        assert obs.B([y]).tolist() == [-y ** 3]
        assert obs.output(np.array([0.3]), [y]) == 0.3 + y ** 2


def test_example75_transform_is_x1(ex75, ex75_spec):
    for x in sample(ex75.box, 30, 1).points:
        assert transform_general(ex75, ex75_spec, x)[0] == pytest.approx(x[0], abs=1e-15)


def test_first_order_transform_is_Z0(ex75):
    spec = GeneralSpec(CharPoly((2.0,)), 1, "z*exp(y1) + z^3", ["y1"], bracket=(-5, 5))
    for x in sample(ex75.box, 10, 2).points:
        xl = x.tolist()
        expected = spec.G(ex75.q(xl), ex75.H(xl))
        assert transform_general(ex75, spec, x)[0] == expected


def test_second_order_shapes(ex75):
    spec = GeneralSpec(char_from_roots([-1, -2]), 1, "z", ["y1", "y1^2"], inverse="zeta")
    obs = synthesize_general(spec)
    assert obs.A.shape == (2, 2) and obs.B([0.5]).shape == (2,)
    np.testing.assert_array_equal(obs.A, [[0.0, -2.0], [1.0, -3.0]])


def test_zero_injection(ex75):
    spec = GeneralSpec(char_from_roots([-1]), 1, "z + y1", ["0"], inverse="zeta - y1")
    obs = synthesize_general(spec)
    assert obs.B([3.0]).tolist() == [0.0]
    assert obs.output(np.array([2.0]), [3.0]) == -1.0


def test_unstable_spec_rejected():
    spec = GeneralSpec(char_from_roots([1.0]), 1, "z", ["y1"], inverse="zeta")
    with pytest.raises(UnstableObserverError):
        synthesize_general(spec)
    synthesize_general(spec, allow_unstable=True)


def test_spec_needs_bracket_or_inverse():
    with pytest.raises(ValueError, match="bracket"):
        GeneralSpec(CharPoly((1.0,)), 1, "z^3 + z", ["y1"])


def test_spec_order_mismatch():
    with pytest.raises(ValueError):
        GeneralSpec(CharPoly((1.0, 2.0)), 1, "z", ["y1"], inverse="zeta")


def test_invert_explicit():
    spec = GeneralSpec(CharPoly((1.0,)), 1, "z - y1^2", ["0"], inverse="zeta + y1^2")
    assert invert_G(spec, 5.0, [2.0]) == 9.0


def test_invert_implicit_cubic():
    spec = GeneralSpec(CharPoly((1.0,)), 1, "z^3 + z", ["0"], bracket=(-10.0, 10.0))
    for y in (-3.0, 0.0, 8.0):
        assert invert_G(spec, 2.0, [y]) == pytest.approx(1.0, abs=1e-12)


def test_invert_bracket_without_sign_change():
    spec = GeneralSpec(CharPoly((1.0,)), 1, "z", ["0"], bracket=(0.0, 1.0))
    with pytest.raises(InversionError, match="sign change"):
        invert_G(spec, 10.0, [0.0])


DECREASING = GeneralSpec(CharPoly((1.0,)), 1, "-z^3 - exp(z)*(1 + y1^2)", ["0"],
                         bracket=(-4.0, 4.0))


@given(st.floats(-3.5, 3.5), st.floats(-2.0, 2.0))
@settings(max_examples=200, deadline=None)
def test_inversion_contract(z, y):
    zeta = DECREASING.G(z, [y])
    assert invert_G(DECREASING, zeta, [y]) == pytest.approx(z, abs=1e-10)


def test_monotone_check(ex75, ex75_spec):
    assert check_monotone(ex75, ex75_spec) == 1
    assert check_monotone(ex75, DECREASING) == -1
    bad = GeneralSpec(CharPoly((1.0,)), 1, "z^2 + y1", ["0"], bracket=(-1.0, 1.0))
    with pytest.raises(NotInvertibleError):
        check_monotone(ex75, bad)


def _affine_spec(obs):
    """The linear observer's 𝒵-functions written as expressions."""
    def lin(row, lead=""):
        terms = [f"({float(c)!r})*y{j + 1}" for j, c in enumerate(row)]
        return lead + " + ".join(terms)
    Z0 = lin(-obs.D[0], "z + ")
    Z = [lin(row) for row in obs.B]
    inv = lin(obs.D[0], "zeta + ")
    return GeneralSpec(obs.alpha, obs.B.shape[1], Z0, Z, inverse=inv)


@pytest.mark.parametrize("seed", [3, 4])
def test_affine_reduction(seed):
    rng = np.random.default_rng(seed)
    sys = random_observable(rng, 3, 1)
    obs = design_corollary(sys, [-1.0, -2.5])
    model = sys.to_model()
    spec = _affine_spec(obs)
    pts = sample(model.box, 40, seed).points
    assert verify_71(model, spec, pts, tol=1e-9).passed
    gobs = synthesize_general(spec)
    np.testing.assert_array_equal(gobs.A, obs.A)
    for x in pts:
        Tg = transform_general(model, spec, x)
        Tl = transform_eval(model, obs.alpha, obs.beta, x)
        np.testing.assert_allclose(Tg, Tl, rtol=1e-9, atol=1e-9)
        y = np.asarray(model.H(x.tolist()))
        np.testing.assert_allclose(gobs.B(y), obs.B @ y, rtol=1e-12, atol=1e-15)


def test_affine_reduction_cstr(cstr, cstr_observer):
    spec = _affine_spec(cstr_observer)
    pts = sample(cstr.box, 50, 9).points
    assert verify_71(cstr, spec, pts, tol=1e-9).passed
    for x in pts:
        assert transform_general(cstr, spec, x)[0] == pytest.approx(
            transform_eval(cstr, cstr_observer.alpha, cstr_observer.beta, x)[0],
            rel=1e-9, abs=1e-9)


def test_general_pde(ex75, ex75_spec):
    obs = synthesize_general(ex75_spec)
    for x in sample(ex75.box, 20, 3).points:
        T, LT, H = transform_general_with_derivative(ex75, ex75_spec, x)
        np.testing.assert_allclose(LT, obs.A @ T + obs.B(H), rtol=1e-12, atol=1e-14)


def test_general_second_order_identity():
    # x1' = -x1 + x2, x2' = -2 x2: (L+1) x1 = x2 and (L+2) x2 = 0, so the
    # second-order identity holds with all 𝒵_i = 0
    sys = LTISystem([[-1.0, 1.0], [0.0, -2.0]], [[0.0, 1.0]], [1.0, 0.0]).to_model()
    spec = GeneralSpec(char_from_roots([-1, -2]), 1, "z", ["0", "0"], inverse="zeta")
    assert verify_71(sys, spec, sample(sys.box, 20, 0).points).passed
