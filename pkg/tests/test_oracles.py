import numpy as np
import pytest

from caprank.decomposition import singular_spectrum
from caprank.errors import LengthMismatchError, TooFewError
from caprank.oracles import oracle_spearman, oracle_spectrum


class TestOracleSpectrum:
    def test_diagonal(self):
        values = oracle_spectrum(np.array([[3.0, 0.0], [0.0, 1.0]]))
        assert np.allclose(values, [3.0, 1.0], atol=1e-12)

    def test_two_by_two(self):
        values = oracle_spectrum(np.array([[1.0, 2.0], [3.0, 4.0]]))
        # roots of x^2 - 30x + 4 (characteristic polynomial of the Gram matrix)
        expected = np.sqrt(np.sort(np.roots([1.0, -30.0, 4.0]))[::-1])
        assert np.allclose(values, expected, rtol=1e-12)
        assert np.allclose(values, [5.4650, 0.3660], atol=5e-5)

    def test_agrees_with_main_spectrum(self):
        rng = np.random.default_rng(19)
        for _ in range(100):
            m = rng.standard_normal((5, 7))
            assert np.allclose(
                oracle_spectrum(m), singular_spectrum(m).values, atol=1e-9
            )

    def test_wide_and_tall(self):
        rng = np.random.default_rng(20)
        tall = rng.standard_normal((9, 4))
        wide = rng.standard_normal((4, 9))
        assert oracle_spectrum(tall).size == 4
        assert oracle_spectrum(wide).size == 4
        assert np.allclose(oracle_spectrum(tall), np.linalg.svd(tall, compute_uv=False), atol=1e-10)
        assert np.allclose(oracle_spectrum(wide), np.linalg.svd(wide, compute_uv=False), atol=1e-10)

    def test_sorted_non_increasing(self):
        rng = np.random.default_rng(21)
        values = oracle_spectrum(rng.standard_normal((6, 6)))
        assert np.all(np.diff(values) <= 0)
        assert np.all(values >= 0)


class TestOracleSpearman:
    def test_identical(self):
        assert oracle_spearman([4.0, 1.0, 3.0], [4.0, 1.0, 3.0]) == pytest.approx(1.0)

    def test_derived_half(self):
        assert oracle_spearman([1, 2, 3], [1, 3, 2]) == pytest.approx(0.5, abs=1e-12)

    def test_same_tie_structure(self):
        assert oracle_spearman([1, 1, 2], [2, 2, 3]) == pytest.approx(1.0, abs=1e-15)

    def test_undefined_on_constant(self):
        assert oracle_spearman([1, 1, 1], [1, 2, 3]) is None

    def test_errors(self):
        with pytest.raises(LengthMismatchError):
            oracle_spearman([1, 2], [1])
        with pytest.raises(TooFewError):
            oracle_spearman([1], [1])
