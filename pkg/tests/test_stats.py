"""Binomial tail strength against exact big-integer oracles."""

import math
from math import comb

import mpmath
import pytest

from qwmark import multi_layer_strength, watermark_strength

def exact_log10_tail(k: int, n: int) -> float:
    """Exact-rational oracle: log10 of sum_{i=k}^{n} C(n,i) / 2^n.

    Precision scales with n so the big-integer tail sum (up to ~n*0.302
    decimal digits) is represented exactly before taking the log.
    """
    num = sum(comb(n, i) for i in range(k, n + 1))
    with mpmath.workdps(max(60, int(0.302 * n) + 30)):
        return float(mpmath.log10(mpmath.mpf(num) / mpmath.mpf(2**n)))


def test_full_match_40_bits():
    res = watermark_strength(40, 40)
    assert res.p_value == pytest.approx(2.0 ** -40, rel=1e-9)
    assert res.p_value == pytest.approx(9.0949e-13, rel=1e-4)
    assert res.log10_p == pytest.approx(-40 * math.log10(2), rel=1e-12)


def test_zero_matched_is_certainty():
    for total in (1, 10, 1000):
        res = watermark_strength(0, total)
        assert res.p_value == 1.0
        assert res.log10_p == 0.0


def test_eight_of_ten_exact_enumeration():
    # (C(10,8) + C(10,9) + C(10,10)) / 2^10 = 56/1024
    res = watermark_strength(8, 10)
    assert res.p_value == pytest.approx(56 / 1024, rel=1e-12)


def test_monotone_in_matched():
    prev = 1.0
    for k in range(0, 101):
        p = watermark_strength(k, 100).log10_p
        assert p <= prev + 1e-12
        prev = p


def test_underflowed_p_keeps_exact_log():
    res = watermark_strength(3000, 3000)
    assert res.p_value == 0.0
    assert res.log10_p == pytest.approx(-3000 * math.log10(2), rel=1e-12)


def test_exhaustive_agreement_up_to_64():
    # strict relative comparison, no absolute fallback
    for n in range(1, 65):
        for k in range(0, n + 1):
            got = watermark_strength(k, n).log10_p
            want = exact_log10_tail(k, n)
            if want == 0.0:
                assert got == 0.0
            else:
                assert abs(got - want) <= 1e-11 * abs(want), (k, n)


@pytest.mark.parametrize("n", [100, 333, 512, 1000])
def test_large_totals_within_stated_tolerance(n):
    for k in [1, 2, n // 4, n // 2, n - 1, n]:
        got = watermark_strength(k, n).log10_p
        want = exact_log10_tail(k, n)
        assert abs(got - want) <= 1e-9 * abs(want), (k, n)


def test_rejects_invalid_counts():
    with pytest.raises(ValueError):
        watermark_strength(5, 4)
    with pytest.raises(ValueError):
        watermark_strength(-1, 4)
    with pytest.raises(ValueError):
        watermark_strength(0, 0)


def test_multi_layer_additivity():
    assert multi_layer_strength([-12.041, -12.041]) == pytest.approx(-24.082, abs=1e-9)
    assert multi_layer_strength([-5.5]) == -5.5


def test_multi_layer_matches_192_layer_scale():
    per_layer = watermark_strength(40, 40).log10_p
    combined = multi_layer_strength([per_layer] * 192)
    assert combined == pytest.approx(192 * math.log10(9.0949e-13), abs=0.1)
    assert combined == pytest.approx(-2311.91, abs=0.05)


def test_multi_layer_rejects_empty():
    with pytest.raises(ValueError):
        multi_layer_strength([])
