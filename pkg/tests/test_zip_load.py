import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from feederplan.case_model import ZIPCoefficients
from feederplan.zip_load import (eval_zip, eval_zip_p, eval_zip_q, linearize_triple,
                                 linearize_zip_in_vsq, secant_error_bound)


@st.composite
def triples(draw):
    a = draw(st.floats(0.0, 1.0))
    b = draw(st.floats(0.0, 1.0 - a))
    return (a, b, 1.0 - a - b)


def test_eval_at_rated_is_nominal():
    z = ZIPCoefficients(0.4, 0.3, 0.3, 0.2, 0.5, 0.3)
    assert eval_zip_p(1.0, 0.7, z) == pytest.approx(0.7, abs=1e-15)
    assert eval_zip_q(1.0, 0.3, z) == pytest.approx(0.3, abs=1e-15)


def test_constant_impedance_values():
    assert eval_zip(0.95, 1.0, 1.0, 0.0, 0.0) == pytest.approx(0.9025, abs=1e-15)
    assert eval_zip(0.9, 2.0, 1.0, 0.0, 0.0) == pytest.approx(1.62, abs=1e-15)


def test_mixed_values():
    assert eval_zip(0.95, 1.0, 0.4, 0.3, 0.3) == pytest.approx(0.946, abs=1e-15)
    z = ZIPCoefficients(0.0, 0.0, 1.0, 0.5, 0.25, 0.25)
    assert eval_zip_q(1.05, 1.0, z) == pytest.approx(1.06375, abs=1e-14)


def test_non_positive_voltage():
    with pytest.raises(ValueError):
        eval_zip(0.0, 1.0, 1.0, 0.0, 0.0)


def test_vectorised():
    out = eval_zip(np.array([0.9, 1.0]), 1.0, 0.0, 1.0, 0.0)
    assert np.allclose(out, [0.9, 1.0])


def test_linearize_exact_cases():
    z = linearize_triple(1.0, 0.0, 0.0, 1.0, (0.9, 1.05))
    assert (z.slope, z.intercept, z.max_error) == (1.0, 0.0, 0.0)
    p = linearize_triple(0.0, 0.0, 1.0, 1.0, (0.9, 1.05))
    assert (p.slope, p.intercept, p.max_error) == (0.0, 1.0, 0.0)
    z2 = linearize_triple(1.0, 0.0, 0.0, 1.1, (0.9, 1.05))
    assert z2.slope == pytest.approx(1.0 / 1.21)


def test_linearize_current_term():
    aff = linearize_triple(0.0, 1.0, 0.0, 1.0, (0.90, 1.05))
    approx = float(aff(0.95**2))
    # (0.975^2 + 0.95^2) / (2 * 0.975)
    assert approx == pytest.approx(0.9503205128205128, abs=1e-15)
    assert approx - 0.95 == pytest.approx(3.2051e-4, rel=1e-4)


def test_reported_error_is_sup_norm():
    aff = linearize_triple(0.0, 1.0, 0.0, 1.0, (0.90, 1.05))
    v = np.linspace(0.90, 1.05, 150001)
    err = np.max(np.abs(aff(v**2) - v))
    assert aff.max_error == pytest.approx(err, rel=1e-9)


def test_inverted_range():
    with pytest.raises(ValueError):
        linearize_triple(0.0, 1.0, 0.0, 1.0, (1.05, 0.9))
    with pytest.raises(ValueError):
        linearize_triple(0.0, 1.0, 0.0, 1.0, (0.0, 0.9))


def test_linearize_pair():
    ap, aq = linearize_zip_in_vsq(ZIPCoefficients(1, 0, 0, 0, 1, 0), 1.0, (0.95, 1.05))
    assert ap.max_error == 0.0
    assert aq.max_error > 0.0


@settings(max_examples=100, deadline=None)
@given(triples(), st.floats(0.01, 10.0))
def test_rated_voltage_returns_nominal(tri, nominal):
    assert eval_zip(1.0, nominal, *tri) == pytest.approx(nominal, rel=1e-12)


@settings(max_examples=100, deadline=None)
@given(triples())
def test_monotone_in_voltage(tri):
    v = np.linspace(0.9, 1.1, 201)
    assert np.all(np.diff(eval_zip(v, 1.0, *tri)) >= -1e-15)


@settings(max_examples=100, deadline=None)
@given(triples(), st.floats(0.85, 1.0), st.floats(0.02, 0.2))
def test_secant_error_within_analytic_bound(tri, v_lo, width):
    v_hi = v_lo + width
    aff = linearize_triple(*tri, v_rated=1.0, v_range=(v_lo, v_hi))
    v = np.arange(v_lo, v_hi + 5e-4, 1e-3)
    v = v[v <= v_hi]
    err = np.max(np.abs(aff(v**2) - eval_zip(v, 1.0, *tri)))
    assert err <= secant_error_bound(tri[1], v_lo, v_hi) + 1e-15
    assert err <= aff.max_error + 1e-15


def test_analytic_bound_value():
    assert secant_error_bound(1.0, 0.90, 1.05) == pytest.approx(0.15**2 / 7.2)
    assert math.isclose(secant_error_bound(0.0, 0.9, 1.05), 0.0)
