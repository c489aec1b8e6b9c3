import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad
from scipy.optimize import brentq

from tontine.mortality import (
    ConstantHazard,
    GompertzMakehamParams,
    HazardDomainError,
    check_hazard_domain,
    cumulative_hazard,
    hazard,
    survival,
    validate_hazard_domain,
)

UK = GompertzMakehamParams()

# 40-digit mpmath evaluations of the same closed forms, frozen.
HAZARD_65 = 0.011757088922884729176
HAZARD_95 = 0.25800055794023492954
H_65_95 = 2.537903551049811192
S_65_85 = 0.42113245938189578215
ZERO_AGE = 52.068620830973932638

ages = st.floats(min_value=53.0, max_value=125.0)


def test_defaults_are_uk_male_fit():
    assert (UK.m, UK.q, UK.v) == (83.43, 10.94, -0.0052)


def test_hazard_high_precision():
    assert hazard(UK, 65.0) == pytest.approx(HAZARD_65, rel=1e-14)
    assert hazard(UK, 95.0) == pytest.approx(HAZARD_95, rel=1e-14)


def test_hazard_at_65_near_quoted_rounding():
    # quoted value is 0.011762; the parameters give 0.0117571
    assert abs(hazard(UK, 65.0) - 0.011762) < 1e-5


def test_cumulative_hazard_high_precision():
    assert cumulative_hazard(UK, 65.0, 95.0) == pytest.approx(H_65_95, rel=1e-14)
    assert survival(UK, 65.0, 85.0) == pytest.approx(S_65_85, rel=1e-14)


def test_cumulative_hazard_rejects_reversed_interval():
    with pytest.raises(ValueError):
        cumulative_hazard(UK, 90.0, 80.0)


def test_zero_hazard_age_matches_root_finder():
    root = brentq(lambda t: hazard(UK, t), 30.0, 80.0, xtol=1e-14)
    assert UK.zero_hazard_age() == pytest.approx(root, abs=1e-10)
    assert UK.zero_hazard_age() == pytest.approx(ZERO_AGE, abs=1e-12)


def test_domain_validation():
    assert validate_hazard_domain(UK, 65.0) == 65.0
    assert validate_hazard_domain(UK, 40.0) == pytest.approx(ZERO_AGE)
    check_hazard_domain(UK, 60.0)
    with pytest.raises(HazardDomainError):
        check_hazard_domain(UK, 50.0)


def test_scalar_and_array_forms():
    assert isinstance(hazard(UK, 70.0), float)
    arr = hazard(UK, np.array([65.0, 75.0]))
    assert arr.shape == (2,)
    assert arr[1] == hazard(UK, 75.0)


def test_params_validation():
    with pytest.raises(ValueError):
        GompertzMakehamParams(q=0.0)
    with pytest.raises(ValueError):
        GompertzMakehamParams(m=math.nan)
    assert GompertzMakehamParams.from_dict(UK.to_dict()) == UK


def test_constant_hazard_double():
    h = ConstantHazard(0.05)
    assert h.hazard(80.0) == 0.05
    assert survival(h, 60.0, 70.0) == pytest.approx(math.exp(-0.5), rel=1e-15)


@settings(max_examples=60, deadline=None)
@given(ages, st.floats(min_value=0.0, max_value=20.0))
def test_cumulative_hazard_is_integral_of_hazard(s, width):
    t = s + width
    ref, _ = quad(lambda u: hazard(UK, u), s, t, epsabs=1e-14, epsrel=1e-13)
    assert cumulative_hazard(UK, s, t) == pytest.approx(ref, rel=1e-11, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(ages, st.floats(min_value=0.0, max_value=15.0), st.floats(min_value=0.0, max_value=15.0))
def test_survival_is_multiplicative(s, a, b):
    lhs = survival(UK, s, s + a + b)
    rhs = survival(UK, s, s + a) * survival(UK, s + a, s + a + b)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=60, deadline=None)
@given(ages, st.floats(min_value=1e-3, max_value=10.0))
def test_hazard_increasing_and_survival_decreasing(s, width):
    assert hazard(UK, s + width) > hazard(UK, s)
    assert survival(UK, s, s + width) < 1.0
