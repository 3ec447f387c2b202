import itertools
import json
import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from wittenlab.poly import Polynomial
from wittenlab.potential import (
    Potential,
    analyze_point,
    f_reg,
    ftilde,
    ftilde_tau,
    match_family,
    phidelta,
    vdelta,
    witten_potential_term,
)

S1, S2 = sp.symbols("x1 x2")


def brute_ftilde(expr, syms, k, x, tau=1.0):
    """Enumerate every exponent tuple with 1 <= |alpha| <= k and differentiate symbolically."""
    total = 0.0
    for alpha in itertools.product(range(k + 1), repeat=len(syms)):
        m = sum(alpha)
        if not 1 <= m <= k:
            continue
        d = expr
        for s, e in zip(syms, alpha):
            d = sp.diff(d, s, e)
        v = float(d.subs(dict(zip(syms, x))))
        total += (tau * abs(v)) ** (1.0 / m)
    return total


def harmonic():
    (x,) = Polynomial.variables(1)
    return Potential(0.5 * x**2, k=2)


def test_ftilde_harmonic():
    pot = harmonic()
    assert ftilde(pot, [0.0]) == 1.0
    assert ftilde(pot, [3.0]) == 4.0
    assert ftilde_tau(pot, [3.0], 4.0) == 14.0


def test_ftilde_first_family_enumeration():
    pot = vdelta(1.0)
    expr = S1**2 * S2**2 + S1**2 + S2**2
    assert len(pot.orders) == 14
    assert ftilde(pot, [1.0, 1.0]) == pytest.approx(brute_ftilde(expr, (S1, S2), 4, (1, 1)), rel=1e-14)
    assert ftilde_tau(pot, [1.0, 1.0], 2.0) == pytest.approx(
        brute_ftilde(expr, (S1, S2), 4, (1, 1), tau=2.0), rel=1e-14
    )


def test_f_reg_examples():
    zero = Potential(Polynomial.zero(1), k=2)
    assert f_reg(zero, [0.3]) == 2.0
    assert f_reg(harmonic(), [0.0]) == pytest.approx(1 + 2**0.25)
    pot = phidelta(-1.0)
    assert f_reg(pot, [0.0, -10.0]) >= ftilde(pot, [0.0, -10.0])


def test_ftilde_tau_rejects_nonpositive():
    with pytest.raises(ValueError):
        ftilde_tau(harmonic(), [1.0], 0.0)
    with pytest.raises(ValueError):
        witten_potential_term(harmonic(), 0.0, [1.0])


def test_analyze_first_family_at_one_one():
    a = analyze_point(vdelta(1.0), [1.0, 1.0])
    assert a.hess == [[4.0, 4.0], [4.0, 4.0]]
    assert a.lambdas[0] == 0.0
    assert a.lambdas[1] == pytest.approx(8.0)
    assert a.i_pos == [1]
    assert a.pos_sum == pytest.approx(8.0)
    assert a.m_neg == 0.0


def test_analyze_second_family_on_negative_axis():
    a = analyze_point(phidelta(-1.0), [0.0, -10.0])
    assert a.hess == [[40.0, 0.0], [0.0, 0.0]]
    assert a.lambdas == [0.0, 40.0]
    assert a.grad == [0.0, 0.0]
    assert a.pos_sum == 40.0 and a.m_neg == 0.0
    json.dumps(a.to_dict())


def test_analyze_linear():
    x1, x2 = Polynomial.variables(2)
    a = analyze_point(Potential(2 * x1 - x2, k=2), [0.3, 0.7])
    assert a.pos_sum == 0.0 and a.m_neg == 0.0


def test_witten_term_examples():
    pot = harmonic()
    for x in (-2.0, 0.0, 1.5):
        assert witten_potential_term(pot, 1.0, [x]) == pytest.approx(x * x - 1)
    assert witten_potential_term(vdelta(1.0), 1.0, [1.0, 1.0]) == 24.0


def test_k_must_be_at_least_two():
    with pytest.raises(ValueError):
        Potential(Polynomial.zero(1), k=1)


def test_family_recognition():
    assert match_family(vdelta(-0.5).V) == ("vdelta", -0.5)
    assert match_family(phidelta(2.0).V) == ("phidelta", 2.0)
    x1, x2 = Polynomial.variables(2)
    assert match_family(x1**3 + x2) is None


points = st.tuples(st.floats(-20, 20), st.floats(-20, 20))
deltas = st.sampled_from([-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0])


@settings(max_examples=100, deadline=None)
@given(points, deltas, st.booleans())
def test_pointwise_invariants(x, d, first):
    pot = vdelta(d) if first else phidelta(d)
    a = analyze_point(pot, list(x))
    lap = pot.V.laplacian().eval(list(x))
    assert a.pos_sum >= 0 and a.m_neg >= 0
    assert abs(a.pos_sum - a.m_neg - lap) <= 1e-8 * (1 + abs(lap))
    assert a.ftilde_val <= a.f_val * (1 + 1e-12)
    assert a.f_val <= a.C_k * (1 + a.ftilde_val)
    assert a.lambdas == sorted(a.lambdas)


@settings(max_examples=60, deadline=None)
@given(points, deltas, st.lists(st.floats(0.01, 50), min_size=2, max_size=6))
def test_ftilde_tau_monotone(x, d, taus):
    pot = vdelta(d)
    vals = [ftilde_tau(pot, list(x), t) for t in sorted(taus)]
    assert all(b >= a * (1 - 1e-12) for a, b in zip(vals, vals[1:]))
    assert ftilde_tau(pot, list(x), 1.0) == ftilde(pot, list(x))


@settings(max_examples=60, deadline=None)
@given(points, deltas)
def test_eigenvalues_match_closed_form(x, d):
    a = analyze_point(phidelta(d), list(x))
    (p, q), (_, r) = a.hess
    tr, det = p + r, p * r - q * q
    disc = math.sqrt(max(tr * tr - 4 * det, 0.0))
    ref = sorted([(tr - disc) / 2, (tr + disc) / 2])
    scale = 1 + abs(p) + abs(q) + abs(r)
    for got, want in zip(a.lambdas, ref):
        # zeroed eigenvalues sit within the tie threshold of the closed form
        assert abs(got - want) <= 1e-10 * scale


def test_vectorized_matches_scalar():
    pot = phidelta(0.5)
    X = np.random.default_rng(5).normal(size=(20, 2)) * 4
    many = pot.ftilde_many(X)
    assert np.array_equal(many, [ftilde(pot, x) for x in X])
