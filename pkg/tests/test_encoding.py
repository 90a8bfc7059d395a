import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcsfqf.encoding import (PopulationCodec, cosine_embedding, encode_population_spikes, gaussian_rate,
                             hash_uniform, spike_probability)


def test_defaults_and_mu():
    c = PopulationCodec()
    assert (c.m, c.sigma) == (64, 0.05)
    assert c.mu[0] == 0 and c.mu[-1] == 1 and np.all(np.diff(c.mu) > 0)


def test_rate_examples():
    c = PopulationCodec()
    assert gaussian_rate(c, c.mu[10])[10] == pytest.approx(1.0)
    assert gaussian_rate(c, c.mu[10] + c.sigma)[10] == pytest.approx(np.exp(-0.5))


@pytest.mark.parametrize("tau", [-0.1, 1.2, np.nan])
def test_rate_rejects_out_of_range(tau):
    with pytest.raises(ValueError):
        gaussian_rate(PopulationCodec(), tau)


@pytest.mark.parametrize("kw", [{"m": 1}, {"sigma": 0.0}, {"phi": 1.5}])
def test_codec_rejects_invalid(kw):
    with pytest.raises(ValueError):
        PopulationCodec(**kw)


def test_zero_rate_never_spikes():
    c = PopulationCodec(phi=1e-300)
    assert encode_population_spikes(c, np.full(100, 0.5), 8).sum() == 0


def test_peak_neuron_mean_count():
    c = PopulationCodec(m=3, sigma=0.05)
    spikes = encode_population_spikes(c, np.full(10_000, 0.5), 8)
    counts = spikes[:, :, 1].sum(axis=0)
    p = 1 - np.exp(-1.0)
    assert abs(counts.mean() - 8 * p) < 3 * np.sqrt(8 * p * (1 - p) / 10_000)


def test_active_band_centre():
    c = PopulationCodec()
    counts = encode_population_spikes(c, np.full(200, 0.5), 8).sum(axis=(0, 1))
    centre = (counts * np.arange(c.m)).sum() / counts.sum()
    assert abs(centre - c.m / 2) < 1.5


def test_selectivity_beyond_four_sigma():
    c = PopulationCodec()
    p = spike_probability(gaussian_rate(c, 0.5))
    assert np.all(p[np.abs(c.mu - 0.5) > 4 * c.sigma] < 1e-3)


def test_deterministic_and_order_independent():
    c = PopulationCodec(seed=3)
    taus = np.array([0.1, 0.5, 0.9])
    a = encode_population_spikes(c, taus, 8, key=5)
    b = encode_population_spikes(PopulationCodec(seed=3), taus, 8, key=5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, encode_population_spikes(c, taus, 8, key=6))


def test_hash_uniform_range_and_moments():
    u = hash_uniform(0, 1, np.arange(100_000))
    assert u.min() >= 0 and u.max() < 1
    assert abs(u.mean() - 0.5) < 0.005 and abs(u.var() - 1 / 12) < 0.002


@given(st.floats(0.0, 0.5), st.integers(1, 5))
def test_shift_equivariance(tau, j):
    # shifting tau by j grid spacings relabels the rates by j neurons
    c = PopulationCodec(m=11, sigma=0.05)
    shifted = gaussian_rate(c, tau + j / (c.m - 1))
    np.testing.assert_allclose(shifted[j:], gaussian_rate(c, tau)[:-j], rtol=1e-9, atol=1e-300)


def test_cosine_embedding():
    e = cosine_embedding(np.array([0.3, 1.0, 0.5]), 4)
    np.testing.assert_allclose(e[:, 0], 1.0)
    assert e[1, 1] == pytest.approx(-1.0)
    assert e[2, 2] == pytest.approx(-1.0)
