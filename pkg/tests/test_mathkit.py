import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from pdcqkd.mathkit import DomainError, Tolerance, binary_entropy, log_binomial, log_factorial


@pytest.mark.parametrize("n, expected", [(0, 0.0), (1, 0.0), (10, math.log(3628800))])
def test_log_factorial_examples(n, expected):
    assert log_factorial(n) == pytest.approx(expected, abs=1e-15)


def test_log_factorial_switches_to_lgamma_smoothly():
    assert log_factorial(21) == pytest.approx(math.log(math.factorial(21)), rel=1e-14)
    assert log_factorial(170) == pytest.approx(math.log(math.factorial(170)), rel=1e-14)


def test_log_factorial_rejects_negative():
    with pytest.raises(DomainError):
        log_factorial(-1)


@given(st.integers(min_value=1, max_value=300))
def test_log_factorial_recurrence(n):
    assert log_factorial(n) - log_factorial(n - 1) == pytest.approx(math.log(n), abs=1e-9)


@pytest.mark.parametrize("n, k, expected", [(5, 0, 0.0), (4, 2, math.log(6)), (10, 5, math.log(252))])
def test_log_binomial_examples(n, k, expected):
    assert log_binomial(n, k) == pytest.approx(expected, abs=1e-14)


def test_log_binomial_rejects_k_above_n():
    with pytest.raises(DomainError):
        log_binomial(3, 4)


@given(st.integers(0, 60), st.data())
def test_log_binomial_matches_integer_binomial(n, data):
    k = data.draw(st.integers(0, n))
    assert log_binomial(n, k) == pytest.approx(math.log(math.comb(n, k)), abs=1e-10)


@pytest.mark.parametrize("p, expected", [(0.5, 1.0), (0.0, 0.0), (1.0, 0.0)])
def test_binary_entropy_examples(p, expected):
    assert binary_entropy(p) == expected


def test_binary_entropy_at_eleven_percent():
    assert binary_entropy(0.11) == pytest.approx(0.4999157, abs=1e-6)


@pytest.mark.parametrize("p", [-1e-12, 1.0 + 1e-12, float("nan")])
def test_binary_entropy_domain(p):
    with pytest.raises(DomainError):
        binary_entropy(p)


@given(st.floats(0.0, 1.0))
def test_binary_entropy_symmetric_and_bounded(p):
    h = binary_entropy(p)
    assert 0.0 <= h <= 1.0
    assert h == pytest.approx(binary_entropy(1.0 - p), abs=1e-12)


def test_tolerance_validation():
    with pytest.raises(DomainError):
        Tolerance(tail_eps=0.0)
    with pytest.raises(DomainError):
        Tolerance(rel_eps=1e-2)
    tol = Tolerance()
    assert tol.close(1.0, 1.0 + 1e-10)
    assert not tol.close(1.0, 1.0 + 1e-6)
