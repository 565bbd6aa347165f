"""Theoretical constants: log-space evaluation against the exact rational
oracle, the closed-form upper bound over the admissible grid, and the two
aggregate bounds."""

import math
from fractions import Fraction

import pytest

from bufsgd import (
    BoundInputs,
    InvalidParameterError,
    aggregate_bias_bound,
    aggregate_second_moment_bound,
    second_moment_constant,
    second_moment_constant_bound,
    second_moment_constant_exact,
)


def oracle_constant(m: int, k: int) -> Fraction:
    """Direct factorial evaluation, independent of the library path."""
    if k == 1:
        return Fraction(m)
    num = math.factorial(m) * (k - 1) ** (k - 1) * (m - k) ** (m - k)
    den = math.factorial(k - 1) * math.factorial(m - k) * (m - 1) ** (m - 1)
    return Fraction(num, den)


def admissible_grid(b_max: int):
    for b in range(2, b_max + 1):
        for q in range(0, (b - 1) // 2 + 1):
            for r in range(0, q + 1):
                yield b, q, r


class TestConstant:
    @pytest.mark.parametrize("m", range(2, 41))
    def test_k1_equals_m_exactly(self, m):
        assert second_moment_constant(m, 1) == float(m)

    def test_small_cases(self):
        assert second_moment_constant(7, 1) == 7.0
        assert second_moment_constant(2, 1) == 2.0
        # frozen from the factorial oracle: C(4, 2) = 16/9
        assert oracle_constant(4, 2) == Fraction(16, 9)
        assert second_moment_constant(4, 2) == pytest.approx(16.0 / 9.0, rel=1e-12)

    def test_log_space_matches_exact_rational(self):
        for m in range(2, 21):
            for k in range(1, (m + 1) // 2 + 1):
                exact = float(second_moment_constant_exact(m, k))
                approx = second_moment_constant(m, k)
                assert approx == pytest.approx(exact, rel=1e-9)

    def test_exact_path_matches_independent_oracle(self):
        for m in range(2, 21):
            for k in range(1, (m + 1) // 2 + 1):
                assert second_moment_constant_exact(m, k) == oracle_constant(m, k)

    def test_domain_errors(self):
        with pytest.raises(InvalidParameterError):
            second_moment_constant(4, 0)
        with pytest.raises(InvalidParameterError):
            second_moment_constant(4, 3)  # 2k > m+1
        with pytest.raises(InvalidParameterError):
            second_moment_constant_exact(6, -1)


class TestUpperBound:
    def test_equality_at_r_equals_q(self):
        for b, q in [(2, 0), (5, 2), (10, 4), (40, 19)]:
            bound = second_moment_constant_bound(b, q, q)
            assert bound == float(b - q)
            assert second_moment_constant(b - q, 1) == float(b - q)

    def test_example_value(self):
        # direct formula oracle: 10 * (e/2pi) * 3 / sqrt(20)
        expected = 10.0 * (math.e / (2.0 * math.pi)) * 3.0 / math.sqrt(20.0)
        got = second_moment_constant_bound(10, 4, 0)
        assert got == pytest.approx(expected, rel=1e-12)
        assert got == pytest.approx(2.902, abs=5e-4)

    def test_bounds_constant_on_full_grid(self):
        for b, q, r in admissible_grid(40):
            c = second_moment_constant(b - r, q - r + 1)
            bound = second_moment_constant_bound(b, q, r)
            assert c <= bound * (1.0 + 1e-12), (b, q, r, c, bound)

    def test_parameter_validation(self):
        with pytest.raises(InvalidParameterError):
            second_moment_constant_bound(10, 5, 0)  # q >= B/2
        with pytest.raises(InvalidParameterError):
            second_moment_constant_bound(10, 2, 3)  # r > q


class TestAggregateBounds:
    def test_zero_gradient_bound(self):
        bi = BoundInputs(D=0.0, L=1.0, tau_max=5, d=3)
        assert aggregate_second_moment_bound(bi, 10, 4, 0) == 0.0
        assert aggregate_bias_bound(bi, 10, 4, 0) == 0.0

    def test_second_moment_example(self):
        bi = BoundInputs(D=1.0, L=0.0, tau_max=0, d=2)
        expected = 2.0 * float(oracle_constant(10, 5))
        assert aggregate_second_moment_bound(bi, 10, 4, 0) == pytest.approx(expected, rel=1e-9)

    def test_k1_reduction(self):
        # r = q = 1, B = 4, D = 2, d = 3: bound is (B-q) * D^2 * d = 36
        bi = BoundInputs(D=2.0, L=0.0, tau_max=0, d=3)
        assert aggregate_second_moment_bound(bi, 4, 1, 1) == pytest.approx(36.0)

    def test_bias_delay_free_reduction(self):
        bi = BoundInputs(D=3.0, L=123.0, tau_max=0, d=4)
        c = second_moment_constant(10, 5)
        assert aggregate_bias_bound(bi, 10, 4, 0) == pytest.approx(c * 3.0 * 4.0, rel=1e-12)

    def test_bias_example(self):
        bi = BoundInputs(D=1.0, L=1.0, tau_max=3, d=2)
        c = float(oracle_constant(10, 5))
        expected = c * 1.0 * 2.0 * (3.0 * 1.0 * math.sqrt(c * 2.0) + 1.0)
        assert aggregate_bias_bound(bi, 10, 4, 0) == pytest.approx(expected, rel=1e-9)

    def test_input_validation(self):
        with pytest.raises(InvalidParameterError):
            BoundInputs(D=-1.0, L=1.0, tau_max=0, d=1)
        with pytest.raises(InvalidParameterError):
            BoundInputs(D=1.0, L=1.0, tau_max=-1, d=1)
        with pytest.raises(InvalidParameterError):
            BoundInputs(D=1.0, L=1.0, tau_max=0, d=0)
        bi = BoundInputs(D=1.0, L=1.0, tau_max=0, d=1)
        with pytest.raises(InvalidParameterError):
            aggregate_second_moment_bound(bi, 10, 2, 3)


class TestRobustnessParams:
    def test_valid_bundle(self):
        from bufsgd import RobustnessParams
        rp = RobustnessParams(q=3, r=2).validate_for(10)
        assert (rp.q, rp.r) == (3, 2)

    def test_r_above_q_rejected(self):
        from bufsgd import RobustnessParams
        with pytest.raises(InvalidParameterError):
            RobustnessParams(q=2, r=3)

    def test_q_at_half_rejected_for_candidate_count(self):
        from bufsgd import RobustnessParams
        with pytest.raises(InvalidParameterError):
            RobustnessParams(q=5, r=0).validate_for(10)
