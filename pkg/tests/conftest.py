import math

import numpy as np
import pytest

from folin.files import data_path, load_system, read_json
from folin.gfol import GeneralSpec
from folin.span import CharPoly, char_from_roots, sample, solve_beta
from folin.synth import synthesize
from folin.system import LTISystem


# Values computed from the printed CSTR parameter list:
#   β0 = (-2 ρ cp / (-ΔH), 0),  β1 = (-2 UA/((-ΔH) V) + α1 β0_1, 2 UA/((-ΔH) V))
RHO, CP, NEG_DH, UA, V, F = 1200.0, 3.4, 160000.0, 0.942, 1.0, 0.02
CSTR_BETA0 = (-2 * RHO * CP / NEG_DH, 0.0)
CSTR_GAIN = 2 * UA / (NEG_DH * V)
CSTR_BETA1 = (-CSTR_GAIN + (F / V) * CSTR_BETA0[0], CSTR_GAIN)


@pytest.fixture(scope="session")
def cstr():
    model, _, _ = load_system("cstr.json")
    return model


@pytest.fixture(scope="session")
def cstr_observer(cstr):
    alpha = char_from_roots([-0.02])
    beta = solve_beta(cstr, sample(cstr.box, 200, 0), 1, alpha)
    return synthesize(alpha, beta)


@pytest.fixture(scope="session")
def ex75():
    model, _, _ = load_system("example75.json")
    return model


@pytest.fixture(scope="session")
def ex75_spec():
    doc = read_json(data_path("example75_observer.json"))
    return GeneralSpec(CharPoly(tuple(doc["alpha"])), 1, doc["Z0"], tuple(doc["Z"]),
                       inverse=doc["inverse"], bracket=doc["bracket"])


@pytest.fixture(scope="session")
def dblint():
    return LTISystem([[0.0, 1.0], [0.0, 0.0]], [[1.0, 0.0]], [0.0, 1.0])


def random_observable(rng, n, p):
    """Random (F, H, q) whose observability matrix has full rank."""
    while True:
        F = rng.normal(size=(n, n))
        H = rng.normal(size=(p, n))
        q = rng.normal(size=n)
        O = np.vstack([H @ np.linalg.matrix_power(F, k) for k in range(n)])
        if np.linalg.matrix_rank(O) == n and np.linalg.cond(O) < 1e6:
            return LTISystem(F, H, q)


def random_stable_roots(rng, v):
    """Well-separated real roots and conjugate pairs in the left half plane."""
    roots = []
    while len(roots) < v:
        if v - len(roots) >= 2 and rng.random() < 0.4:
            re, im = -rng.uniform(0.5, 3.0), rng.uniform(0.3, 2.0)
            roots += [complex(re, im), complex(re, -im)]
        else:
            r = -rng.uniform(0.3, 4.0)
            if all(abs(r - s) > 0.2 for s in roots):
                roots.append(r)
    return roots


def isclose_rel(a, b, rel):
    return abs(a - b) <= rel * max(abs(a), abs(b), math.ulp(1.0))
