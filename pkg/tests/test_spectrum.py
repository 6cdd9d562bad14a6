import numpy as np
import pytest

from corrinfer.spectrum import (SpectrumError, SpectrumModel, empirical_spectrum, expect,
                                make_spectrum, marchenko_pastur, random_orthogonal, single_atom,
                                spectrum_of)


@pytest.mark.parametrize("alpha", [0.25, 0.5, 1.0, 2.0])
def test_mp_normalized_with_mean_alpha(alpha):
    sp = marchenko_pastur(alpha)
    assert abs(sp.weights.sum() - 1.0) < 1e-12
    assert abs(sp.mean() - alpha) < 1e-12
    # second moment of MP: alpha (1 + alpha)
    assert abs(expect(sp, lambda l: l * l) - alpha * (1 + alpha)) < 1e-10


@pytest.mark.parametrize("alpha", [0.25, 0.5, 2.0])
def test_mp_zero_atom(alpha):
    assert abs(marchenko_pastur(alpha).zero_weight - max(0.0, 1 - alpha)) < 1e-15


@pytest.mark.parametrize("alpha", [0.3, 1.0, 2.0])
def test_mp_refinement_is_stable(alpha):
    f = lambda l: 1.0 / (l + 0.7)
    a, b = expect(marchenko_pastur(alpha, 200), f), expect(marchenko_pastur(alpha, 400), f)
    assert abs(a - b) < 1e-8


def test_orthogonal_atoms():
    sp = random_orthogonal(0.5)
    assert sorted(sp.atoms) == [(0.0, 0.5), (1.0, 0.5)]
    assert random_orthogonal(1.0).atoms == ((1.0, 1.0),)
    with pytest.raises(SpectrumError):
        random_orthogonal(1.2)


def test_single_atom_and_factory():
    assert single_atom(1.3, 2.0).mean() == 2.0
    assert make_spectrum("single_atom", 0.5, {"lam": 3.0}).mean() == 3.0
    with pytest.raises(SpectrumError):
        single_atom(1.0, -1.0)


def test_unnormalized_spectrum_rejected():
    with pytest.raises(SpectrumError):
        SpectrumModel(alpha=0.5, atoms=((0.0, 0.5), (1.0, 0.4)))


def test_empirical_merges_and_pads_zeros():
    sp = empirical_spectrum([2.0, 2.0 + 1e-13, 1.0], N=5)
    assert dict(sp.atoms) == pytest.approx({0.0: 0.4, 1.0: 0.2, 2.0: 0.4})
    with pytest.raises(SpectrumError):
        empirical_spectrum([-1.0], N=3)


def test_spectrum_of_matrix_matches_moments():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 10)) / np.sqrt(10)
    sp = spectrum_of(X)
    assert abs(sp.weights.sum() - 1) < 1e-12
    assert abs(sp.mean() - np.trace(X.T @ X) / 10) < 1e-12
    assert sp.alpha == 0.6


@pytest.mark.parametrize("sp", [marchenko_pastur(0.5, 20), random_orthogonal(0.3),
                                single_atom(2.0, 1.5)])
def test_json_round_trip(sp):
    back = SpectrumModel.from_json(sp.to_json())
    assert back.alpha == sp.alpha
    np.testing.assert_array_equal(back.locations, sp.locations)
    np.testing.assert_array_equal(back.weights, sp.weights)
