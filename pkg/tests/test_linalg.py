import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from ddlqg.errors import IllPosedCostError, InsufficientDataError, ValidationError
from ddlqg.linalg import inv_sqrt_pd, pinv, psd_sqrt, right_solve


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, (3, 7), elements=st.floats(-5, 5)))
def test_pinv_penrose_conditions(A):
    P, _ = pinv(A)
    assert np.allclose(A @ P @ A, A, atol=1e-8)
    assert np.allclose(P @ A @ P, P, atol=1e-8)


def test_pinv_matches_numpy_on_full_rank():
    A = np.random.default_rng(0).standard_normal((4, 9))
    np.testing.assert_allclose(pinv(A)[0], np.linalg.pinv(A), atol=1e-12)


def test_right_solve_recovers_map():
    rng = np.random.default_rng(1)
    Z = rng.standard_normal((5, 40))
    M = rng.standard_normal((3, 5))
    X, s_min = right_solve(M @ Z, Z)
    np.testing.assert_allclose(X, M, atol=1e-12)
    assert s_min > 0


def test_right_solve_wide_requirement():
    with pytest.raises(InsufficientDataError) as exc:
        right_solve(np.zeros((1, 3)), np.ones((5, 3)))
    assert exc.value.required_N == 5


def test_right_solve_rank_deficient():
    Z = np.vstack([np.ones(10), np.ones(10)])
    with pytest.raises(InsufficientDataError):
        right_solve(np.zeros((1, 10)), Z)


def test_psd_sqrt_clamps_roundoff():
    S = np.diag([4.0, -1e-12])
    np.testing.assert_allclose(psd_sqrt(S), np.diag([2.0, 0.0]))
    with pytest.raises(ValidationError):
        psd_sqrt(np.diag([4.0, -1e-6]))


def test_inv_sqrt_floor():
    np.testing.assert_allclose(inv_sqrt_pd(np.diag([4.0, 0.25])), np.diag([0.5, 2.0]))
    with pytest.raises(IllPosedCostError):
        inv_sqrt_pd(np.diag([1.0, 1e-14]))
