import numpy as np
import pytest

from hetcache.config import DomainError
from hetcache.policies import baseline_distribution, zipf


def test_zipf_examples():
    np.testing.assert_allclose(zipf(4, 0).probabilities, [0.25] * 4)
    np.testing.assert_allclose(zipf(2, 1).probabilities, [2 / 3, 1 / 3], rtol=1e-15)
    s = sum(n**-0.8 for n in range(1, 11))
    assert zipf(10, 0.8).probabilities[0] == pytest.approx(1 / s, rel=1e-14)


def test_zipf_large_sum():
    a = zipf(100_000, 0.8).probabilities
    assert abs(a.sum() - 1) <= 1e-12
    assert np.all(np.diff(a) < 0)


def test_zipf_domain():
    with pytest.raises(DomainError):
        zipf(4, -0.1)
    with pytest.raises(DomainError):
        zipf(0, 1.0)


def test_baselines():
    a = zipf(4, 0.8)
    np.testing.assert_array_equal(baseline_distribution("MPC", a, 2).probs, [1, 1, 0, 0])
    np.testing.assert_allclose(baseline_distribution("UC", zipf(10, 1), 2).probs, [0.2] * 10)
    d = baseline_distribution("IIDC", zipf(2, 0), 1)
    np.testing.assert_allclose(d.probs, [0.5, 0.5])
    assert not d.relaxed_sum


def test_iidc_relaxed_sum():
    a = zipf(100, 0.8)
    d = baseline_distribution("IIDC", a, 25)
    assert d.relaxed_sum
    assert d.probs.sum() < 25
    np.testing.assert_allclose(d.probs, 1 - (1 - a.probabilities) ** 25, rtol=1e-13)


def test_baseline_domain():
    with pytest.raises(DomainError):
        baseline_distribution("MPC", zipf(3, 1), 4)
    with pytest.raises(DomainError):
        baseline_distribution("XYZ", zipf(3, 1), 1)
