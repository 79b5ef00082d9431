import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modalgan.latent import (
    AmbiguousModeError,
    LatentConfig,
    ModePriorParams,
    cumulative_breakpoints,
    embed,
    mode_of,
    modes_of,
    reparam_indicator,
    sample_latent,
    sample_mode,
    sample_modes,
    sample_unimodal,
    softmax_prior,
)

LN = np.log


class StubRng:
    def __init__(self, value):
        self.value = value

    def random(self, n):
        return np.full(n, self.value)


alphas = st.lists(st.floats(-20, 20), min_size=2, max_size=10).map(ModePriorParams)


def test_params_validation():
    with pytest.raises(ValueError):
        ModePriorParams([1.0])
    with pytest.raises(ValueError):
        ModePriorParams([0.0, np.inf])
    with pytest.raises(ValueError):
        LatentConfig(2, mode_spacing=1.0, noise_halfwidth=0.5)


@pytest.mark.parametrize(
    "alpha, expected",
    [
        ([0, 0], [0.5, 0.5]),
        ([LN(0.7), LN(0.3)], [0.7, 0.3]),
        ([1000, 1000, 1000], [1 / 3] * 3),
    ],
)
def test_softmax_prior(alpha, expected):
    p = softmax_prior(ModePriorParams(alpha))
    assert np.all(np.isfinite(p))
    np.testing.assert_allclose(p, expected, atol=1e-12)


@pytest.mark.parametrize(
    "alpha, expected",
    [([0, 0, 0], [1 / 3, 2 / 3, 1.0]), ([LN(0.7), LN(0.3)], [0.7, 1.0])],
)
def test_breakpoints(alpha, expected):
    np.testing.assert_allclose(cumulative_breakpoints(ModePriorParams(alpha)), expected, atol=1e-12)


@given(alphas)
def test_breakpoints_consistent_with_softmax(params):
    a = cumulative_breakpoints(params)
    assert a[-1] == 1.0
    np.testing.assert_allclose(np.diff(a, prepend=0.0), softmax_prior(params), atol=1e-12)
    p = softmax_prior(params)
    assert abs(p.sum() - 1) < 1e-12


@pytest.mark.parametrize(
    "alpha, nu, expected",
    [([0, 0], 0.3, [1, 0]), ([0, 0], 0.75, [0, 1]), ([LN(0.7), LN(0.3)], 0.7, [1, 0])],
)
def test_reparam_indicator_examples(alpha, nu, expected):
    np.testing.assert_array_equal(reparam_indicator(ModePriorParams(alpha), nu), expected)


@pytest.mark.parametrize("nu", [-0.01, 1.01, np.nan])
def test_reparam_indicator_domain(nu):
    with pytest.raises(ValueError):
        reparam_indicator(ModePriorParams([0, 0]), nu)


@given(alphas, st.floats(0.0, 1.0))
def test_partition_property(params, nu):
    f = reparam_indicator(params, nu)
    assert np.sum(f == 1) == 1
    assert np.sum(f == 0) == params.num_modes - 1


def test_sample_mode_frequency():
    rng = np.random.default_rng(0)
    y = sample_modes(ModePriorParams([LN(0.7), LN(0.3)]), 100_000, rng)
    assert 0.694 <= np.mean(y == 0) <= 0.706


def test_sample_mode_tail():
    y = sample_modes(ModePriorParams([0.0, -30.0]), 100_000, np.random.default_rng(1))
    assert np.mean(y == 1) < 1e-10


def test_sample_mode_stub():
    assert sample_mode(ModePriorParams([0, 0]), StubRng(0.3)) == 0
    assert sample_mode(ModePriorParams([0, 0]), StubRng(0.75)) == 1


@settings(max_examples=10, deadline=None)
@given(alphas.filter(lambda p: softmax_prior(p).min() > 1e-3), st.integers(0, 2**32 - 1))
def test_multinoulli_fidelity(params, seed):
    n = 100_000
    y = sample_modes(params, n, np.random.default_rng(seed))
    p = softmax_prior(params)
    freq = np.bincount(y, minlength=p.size) / n
    se = np.sqrt(p * (1 - p) / n)
    # 3 standard errors per mode, plus slack for the union over modes
    assert np.all(np.abs(freq - p) <= 3 * se + 1e-4)


def test_embed_forced_mode():
    cfg = LatentConfig(2, 1.0, 0.25)
    z = embed(cfg, np.ones(1000, dtype=int), np.random.default_rng(0))
    assert np.all((z[:, 1] >= 0.75) & (z[:, 1] <= 1.25))
    assert np.all((z[:, 0] >= -0.25) & (z[:, 0] <= 0.25))


def test_extra_dims():
    cfg = LatentConfig(3, extra_dims=4)
    y, z = sample_latent(cfg, ModePriorParams([0, 0, 0]), 500, np.random.default_rng(0))
    assert z.shape == (500, 7)
    assert np.all(np.abs(z[:, 3:]) <= 1)
    np.testing.assert_array_equal(modes_of(z, cfg), y)


def test_mode_mass_identity_and_disjointness():
    cfg = LatentConfig(2, 1.0, 0.25)
    y, z = sample_latent(cfg, ModePriorParams([LN(0.7), LN(0.3)]), 100_000, np.random.default_rng(3))
    recovered = modes_of(z, cfg)
    np.testing.assert_array_equal(recovered, y)
    assert abs(np.mean(recovered == 0) - 0.7) <= 0.006


@given(st.integers(2, 8), st.floats(0.05, 0.49), st.integers(0, 1000))
@settings(max_examples=25, deadline=None)
def test_disjoint_supports(m, eps_ratio, seed):
    cfg = LatentConfig(m, mode_spacing=2.0, noise_halfwidth=2.0 * eps_ratio)
    y, z = sample_latent(cfg, ModePriorParams.uniform(m), 2000, np.random.default_rng(seed))
    np.testing.assert_array_equal(modes_of(z, cfg), y)


def test_mode_of_examples():
    cfg = LatentConfig(2, 1.0, 0.25)
    assert mode_of([0.1, 1.05], cfg) == 1
    for k in range(2):
        assert mode_of(np.eye(2)[k], cfg) == k
    with pytest.raises(AmbiguousModeError):
        mode_of([0.5, 0.5], cfg)


def test_unimodal_latent_is_uniform_cube():
    cfg = LatentConfig(2)
    y, z = sample_unimodal(cfg, 20000, np.random.default_rng(0))
    assert z.min() >= -1 and z.max() <= 1
    assert abs(np.mean(y == 0) - 0.5) < 0.02


def test_sampling_is_seed_deterministic():
    cfg = LatentConfig(3)
    a = sample_latent(cfg, ModePriorParams([0.1, 0.2, 0.3]), 100, np.random.default_rng(5))
    b = sample_latent(cfg, ModePriorParams([0.1, 0.2, 0.3]), 100, np.random.default_rng(5))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
