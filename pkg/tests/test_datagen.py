import numpy as np
import pytest

from uot_lab.core_math import Rng
from uot_lab.datagen import (
    DEFAULT_MULTILEVEL,
    Component,
    DegradationSpec,
    NoiseSpec,
    PriorSpec,
    build_imbalanced_pair,
    degrade,
    load_dataset,
    mode_proportions,
    multilevel,
    nearest_mode,
    sample_prior,
    save_dataset,
    two_modes,
)
from uot_lab.operators import Blur1D, Identity, Projection


def test_single_component_is_plain_gaussian():
    spec = PriorSpec("gaussian_mixture_2d", (Component((1.0, -2.0), 0.5, 1.0),))
    x = sample_prior(spec, Rng(0), 50_000)
    assert np.allclose(x.mean(axis=0), [1.0, -2.0], atol=5 * 0.5 / np.sqrt(50_000))
    assert np.allclose(x.std(axis=0), 0.5, rtol=0.02)


def test_zero_variance_component_repeats_mean():
    spec = PriorSpec("gaussian_mixture_2d", (Component((0.3, 0.7), 0.0, 1.0),))
    assert np.all(sample_prior(spec, Rng(1), 10) == [0.3, 0.7])


def test_two_mode_counts_within_binomial_interval():
    n = 10_000
    _, labels = sample_prior(two_modes(), Rng(2), n, return_labels=True)
    k = int(np.sum(labels == 0))
    assert abs(k - n / 2) < 3 * np.sqrt(n * 0.25)


def test_nearest_mode_recovers_labels():
    spec = two_modes(separation=3.0, sigma=0.5, weights=(0.8, 0.2))
    x, labels = sample_prior(spec, Rng(3), 20_000, return_labels=True)
    props = mode_proportions(x, spec.means)
    assert abs(props[0] - 0.8) < 3 * np.sqrt(0.16 / 20_000) + 0.002  # 3 sigma of misclassification at 6 sd
    assert np.mean(nearest_mode(x, spec.means) == labels) > 0.99


def test_smooth_signals_are_bounded_and_sized():
    spec = PriorSpec("smooth_signals_1d", signal_len=64, n_modes=8)
    x = sample_prior(spec, Rng(4), 100)
    assert x.shape == (100, 64)
    assert np.all(np.abs(x) <= 1.0)
    # energy sits in the first n_modes frequencies (clipping leaks a little)
    spectrum = np.abs(np.fft.rfft(x, axis=1)) ** 2
    assert spectrum[:, 9:].sum() / spectrum.sum() < 0.01


def test_prior_validation():
    with pytest.raises(ValueError):
        PriorSpec("gaussian_mixture_2d", ())
    with pytest.raises(ValueError):
        PriorSpec("gaussian_mixture_2d", (Component((0.0,), 1.0, 0.4),))
    with pytest.raises(ValueError):
        PriorSpec("two_modes", (Component((0.0, 0.0), 1.0, 1.0),))
    with pytest.raises(ValueError):
        PriorSpec("smooth_signals_1d", signal_len=8, n_modes=5)
    with pytest.raises(ValueError):
        sample_prior(two_modes(), Rng(0), 0)


def test_noiseless_gaussian_is_exact_forward():
    x = Rng(5).normal((4, 2))
    y = degrade(DegradationSpec(Projection(), NoiseSpec("gaussian", sigma=0.0)), x, Rng(6))
    assert np.array_equal(y, Projection().apply(x))


def test_default_noise_level():
    assert NoiseSpec().sigma == 0.05
    y = degrade(DegradationSpec(Identity(4)), np.zeros((50_000, 4)), Rng(7))
    assert abs(y.std() - 0.05) < 5e-4


def test_multilevel_frequencies():
    spec = DegradationSpec(Identity(1), multilevel())
    _, info = degrade(spec, np.zeros((100_000, 1)), Rng(8), return_info=True)
    freq = np.bincount(info["levels"], minlength=4) / 100_000
    assert np.all(np.abs(freq - [0.4, 0.3, 0.2, 0.1]) < 0.01)
    assert [s for s, _ in DEFAULT_MULTILEVEL] == [0.025, 0.05, 0.1, 0.2]


def test_multilevel_noise_scale_follows_level():
    spec = DegradationSpec(Identity(8), multilevel())
    y, info = degrade(spec, np.zeros((40_000, 8)), Rng(9), return_info=True)
    for lvl, sigma in enumerate([0.025, 0.05, 0.1, 0.2]):
        assert abs(y[info["levels"] == lvl].std() / sigma - 1) < 0.03


def test_laplace_and_poisson_degradation():
    y = degrade(DegradationSpec(Identity(2), NoiseSpec("laplace", b=0.1)), np.zeros((100_000, 2)), Rng(10))
    assert abs(np.mean(np.abs(y)) - 0.1) < 0.002
    x = np.full((3, 4), 1.2)
    y, info = degrade(DegradationSpec(Identity(4), NoiseSpec("poisson")), x, Rng(11), return_info=True)
    assert info["clamped"] == 12
    # counts are unbounded above, but never negative
    assert np.all(y >= -1.0) and np.all(np.isfinite(y))


def test_degrade_deterministic_given_stream():
    spec = DegradationSpec(Blur1D(16, 5, 1.0))
    x = Rng(0).normal((5, 16))
    assert np.array_equal(degrade(spec, x, Rng(3)), degrade(spec, x, Rng(3)))


@pytest.mark.parametrize("k,n,major,minor", [(1, 6000, 3000, 3000), (3, 6000, 4500, 1500), (4, 6000, 4800, 1200)])
def test_imbalanced_splits(k, n, major, minor):
    pair = build_imbalanced_pair(two_modes(), k, n, Rng(12))
    assert np.bincount(pair.target_labels).tolist() == [major, minor]
    assert np.bincount(pair.source_labels).tolist() == [minor, minor]
    assert pair.target.shape == (n, 2) and pair.source.shape == (2 * minor, 2)


def test_imbalanced_source_is_degraded_copy():
    deg = DegradationSpec(Identity(2), NoiseSpec("gaussian", sigma=0.0))
    pair = build_imbalanced_pair(two_modes(), 3, 400, Rng(13), deg)
    # noiseless identity degradation keeps source points inside the target set
    tset = {tuple(p) for p in pair.target}
    assert all(tuple(p) in tset for p in pair.source)


def test_imbalanced_validation():
    with pytest.raises(ValueError):
        build_imbalanced_pair(PriorSpec("gaussian_mixture_2d", (Component((0.0, 0.0), 1.0, 1.0),)), 3, 100, Rng(0))
    with pytest.raises(ValueError):
        build_imbalanced_pair(two_modes(), 0, 100, Rng(0))


def test_dataset_csv_roundtrip(tmp_path):
    x = Rng(14).normal((7, 3))
    assert np.array_equal(load_dataset(save_dataset(tmp_path / "d.csv", x)), x)
    one = load_dataset(save_dataset(tmp_path / "one.csv", np.array([[1.5, -2.0]])))
    assert one.shape == (1, 2)


def test_noise_validation():
    with pytest.raises(ValueError):
        NoiseSpec("speckle")
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        multilevel(((0.1, 0.0),))
    assert np.allclose(multilevel().proportions, [0.4, 0.3, 0.2, 0.1])
