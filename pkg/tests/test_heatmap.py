import numpy as np
import pytest

from abdkit import autodiff as ad
from abdkit.autodiff import Tensor
from abdkit.heatmap import (HeatmapRangeError, LocLabel, decode,
                            encode_gaussian, encode_onehot, l1_error_mm,
                            to_original_grid)


@pytest.mark.parametrize("length", [32, 128])
def test_gaussian_round_trip(length):
    for c in range(length):
        probs = encode_gaussian(c, length, sigma=2.0)
        assert probs.sum() == pytest.approx(1.0, abs=1e-9)
        assert decode(probs) == c


@pytest.mark.parametrize("length", [32, 128])
def test_onehot_round_trip(length):
    for c in range(length):
        assert decode(encode_onehot(c, length)) == c


def test_translation_equivariance():
    # Renormalization makes the shift exact only once the truncated tail
    # mass is negligible, hence the 8-sigma interior margin.
    L, sigma = 64, 2.0
    lo, hi = int(np.ceil(8 * sigma)), L - 1 - int(np.ceil(8 * sigma))
    for c in range(lo, hi):
        a = encode_gaussian(c, L, sigma)
        b = encode_gaussian(c + 1, L, sigma)
        np.testing.assert_allclose(b[1:], a[:-1], atol=1e-9)


def test_decode_tie_break_lowest():
    assert decode(np.full(8, 0.125)) == 0


def test_decode_expectation():
    assert decode(np.array([0.25, 0.75]), "expectation") == pytest.approx(0.75)


def test_l1_error_fixtures():
    assert l1_error_mm(60, 40, 2.0, 3.0) == pytest.approx(0.0)
    assert l1_error_mm(77, 77, 1.25, 1.25) == pytest.approx(0.0)
    assert l1_error_mm(100, 70, 1.5, 2.0) == pytest.approx(10.0)


def test_l1_error_symmetry():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p, g = rng.uniform(0, 200, size=2)
        sr, so = rng.uniform(0.5, 5.0, size=2)
        assert l1_error_mm(p, g, sr, so) == pytest.approx(
            abs(g * so - p * sr), abs=1e-12)


def test_kl_monotone_in_center_distance():
    L, sigma, c = 64, 2.0, 30
    target = encode_gaussian(c, L, sigma)
    divs = [ad.kl_div(target, Tensor(encode_gaussian(c + d, L, sigma))).item()
            for d in range(0, 12)]
    assert all(b > a for a, b in zip(divs, divs[1:]))


def test_to_original_grid():
    assert to_original_grid(100, 1.5, 2.0) == 75
    assert to_original_grid(0, 1.0, 3.0) == 0


def test_range_errors():
    with pytest.raises(HeatmapRangeError):
        encode_gaussian(32, 32)
    with pytest.raises(HeatmapRangeError):
        encode_gaussian(-1, 32)
    with pytest.raises(HeatmapRangeError):
        encode_gaussian(5, 32, sigma=0.0)
    with pytest.raises(HeatmapRangeError):
        encode_onehot(99, 32)
    with pytest.raises(HeatmapRangeError):
        LocLabel(10, 5)
    with pytest.raises(HeatmapRangeError):
        decode(np.ones((2, 2)))
