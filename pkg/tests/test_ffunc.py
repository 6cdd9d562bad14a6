import math

import numpy as np
import pytest
from scipy.optimize import fsolve

from corrinfer.ffunc import (SaddleDomainError, evaluate_F, evaluate_F_at, evaluate_G,
                             second_derivatives)
from corrinfer.spectrum import SpectrumModel, marchenko_pastur, random_orthogonal, single_atom

SPECTRA = {
    "mp05": marchenko_pastur(0.5),
    "mp2": marchenko_pastur(2.0),
    "orth03": random_orthogonal(0.3),
    "orth07": random_orthogonal(0.7),
    "atom": single_atom(1.3, 2.0),
}
POINTS = [(0.1, 0.2), (0.3, 0.4), (0.05, 1.5)]


def _functional(spec, x, y, lx, ly):
    """The two-variable objective whose stationary value is F."""
    a = spec.alpha
    return (-0.5 * float(np.dot(spec.weights, np.log(lx * ly + spec.locations)))
            - 0.5 * (a - 1) * math.log(ly) + 0.5 * lx * x + 0.5 * a * ly * y
            - 0.5 * math.log(x) - 0.5 * a * math.log(y) - 0.5 * (1 + a))


def _direct_F(spec, x, y, start):
    """Stationary value found by a generic 2-D root solve on the gradient."""
    lam, wt, a = spec.locations, spec.weights, spec.alpha

    def grad(v):
        lx, ly = np.exp(v)
        den = lx * ly + lam
        return [float(np.dot(wt, ly / den)) - x,
                float(np.dot(wt, lx / den)) + (a - 1) / ly - a * y]

    v = fsolve(grad, np.log(start), xtol=1e-13)
    lx, ly = np.exp(v)
    assert max(map(abs, grad(v))) < 1e-10
    return _functional(spec, x, y, lx, ly)


@pytest.mark.parametrize("name", SPECTRA)
@pytest.mark.parametrize("x,y", POINTS)
def test_envelope_derivatives_match_finite_differences(name, x, y):
    sp = SPECTRA[name]
    fe = evaluate_F(sp, x, y)
    h = 1e-5
    fx = (evaluate_F(sp, x + h, y).value - evaluate_F(sp, x - h, y).value) / (2 * h)
    fy = (evaluate_F(sp, x, y + h).value - evaluate_F(sp, x, y - h).value) / (2 * h)
    assert abs(fe.dF_dx - fx) < 1e-6
    assert abs(fe.dF_dy - fy) < 1e-6
    # envelope form: F_x = (Lx - 1/x)/2, F_y = alpha (Ly - 1/y)/2
    assert abs(fe.dF_dx - 0.5 * (fe.lambda_x - 1 / x)) < 1e-12
    assert abs(fe.dF_dy - 0.5 * sp.alpha * (fe.lambda_y - 1 / y)) < 1e-12


@pytest.mark.parametrize("name", SPECTRA)
@pytest.mark.parametrize("x,y", POINTS)
def test_saddle_residual_and_direct_extremum(name, x, y):
    sp = SPECTRA[name]
    fe = evaluate_F(sp, x, y)
    assert fe.residual < 1e-10
    direct = _direct_F(sp, x, y, (fe.lambda_x * 1.01, fe.lambda_y * 0.99))
    assert abs(direct - fe.value) < 1e-10


@pytest.mark.parametrize("name", ["mp05", "orth07", "atom"])
def test_second_derivatives_match_finite_differences(name):
    sp = SPECTRA[name]
    x, y, h = 0.2, 0.3, 1e-5
    H = second_derivatives(sp, x, y)
    dx = lambda xx, yy: evaluate_F(sp, xx, yy).dF_dx
    dy = lambda xx, yy: evaluate_F(sp, xx, yy).dF_dy
    fd = np.array([[(dx(x + h, y) - dx(x - h, y)) / (2 * h), (dx(x, y + h) - dx(x, y - h)) / (2 * h)],
                   [(dy(x + h, y) - dy(x - h, y)) / (2 * h), (dy(x, y + h) - dy(x, y - h)) / (2 * h)]])
    np.testing.assert_allclose(H, fd, atol=1e-6)
    assert H[0, 1] == H[1, 0]


def test_single_atom_closed_form():
    # lam = 1, alpha = 1, x = y = 0.4: 0.16 (s+1)^2 = s, principal root s = 4, Lx = Ly = 2,
    # F = -1/2 ln 5 - ln 0.4 - 1/5 (frozen oracle value)
    fe = evaluate_F(single_atom(1.0, 1.0), 0.4, 0.4)
    assert abs(fe.s - 4.0) < 1e-12
    assert abs(fe.value - (-0.5 * math.log(5) - math.log(0.4) - 0.2)) < 1e-12
    assert abs(fe.value - (-0.0884282243428951)) < 1e-12


def test_orthogonal_closed_form():
    # alpha = 1/2, xy = 1/4: quadratic saddle s^2 - 2 s - 1 = 0, principal root 1 + sqrt 2
    sp = random_orthogonal(0.5)
    fe = evaluate_F(sp, 0.5, 0.5)
    s = 1 + math.sqrt(2)
    assert abs(fe.s - s) < 1e-12
    g = 0.5 + 0.5 * s / (s + 1)  # <s/(s+lam)> with atoms at 0 and 1
    direct = _functional(sp, 0.5, 0.5, g / 0.5, (g - 0.5) / (0.5 * 0.5))
    assert abs(fe.value - direct) < 1e-12
    assert abs(fe.value - (-0.0672730174965388)) < 1e-12


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("x,y", [(0.1, 0.1), (0.1, 0.5), (0.5, 0.5), (0.1, 2.0)])
def test_mp_identity_inside_domain(alpha, x, y):
    if alpha == 2.0 and x * y > 0.7:
        pytest.skip("outside the real saddle domain for alpha = 2")
    assert abs(evaluate_F(marchenko_pastur(alpha), x, y).value + 0.5 * alpha * x * y) < 1e-10


def test_outside_domain_raises():
    with pytest.raises(SaddleDomainError):
        evaluate_F(random_orthogonal(0.5), 0.8, 0.8)  # xy above 1/(4 alpha)
    with pytest.raises(SaddleDomainError):
        evaluate_F(marchenko_pastur(2.0), 1.0, 1.0)


def test_depends_only_on_product():
    sp = SPECTRA["mp2"]
    a, b = evaluate_F(sp, 0.2, 0.6), evaluate_F(sp, 0.4, 0.3)
    assert abs(a.value - b.value) < 1e-14


@pytest.mark.parametrize("c", [0.5, 1.7, 2.5])
def test_scaling_covariance(c):
    base = marchenko_pastur(0.7)
    scaled = SpectrumModel(alpha=0.7, atoms=tuple((c * l, w) for l, w in base.atoms),
                           nodes=tuple((c * l, w) for l, w in base.nodes))
    for x, y in [(0.1, 0.5), (0.05, 1.0)]:
        assert abs(evaluate_F(scaled, x, y).value - evaluate_F(base, c * x, y).value) < 1e-12


@pytest.mark.parametrize("name", SPECTRA)
def test_small_argument_law(name):
    sp = SPECTRA[name]
    for P in (1e-4, 1e-6):
        v = evaluate_F(sp, P, 1.0).value
        assert abs(v / (-0.5 * sp.mean() * P) - 1) < 10 * P * (1 + sp.mean())


def test_branch_continuation_through_fold():
    sp = random_orthogonal(0.7)  # fold at s* = 2 alpha - 1 = 0.4
    far = evaluate_F_at(sp, 0.5, 0.2)
    assert far.residual < 1e-10
    again = evaluate_F(sp, far.x, far.y, s_hint=0.2)
    assert abs(again.s - 0.2) < 1e-9
    assert abs(again.value - far.value) < 1e-12


@pytest.mark.parametrize("alpha", [0.5, 1.0, 2.0])
@pytest.mark.parametrize("x", [-0.3, -0.1, 0.2])
def test_G_matches_mp_r_transform(alpha, x):
    ge = evaluate_G(marchenko_pastur(alpha), x)
    assert abs(ge.dG - alpha / (2 * (1 - x))) < 1e-10
    assert abs(ge.value + 0.5 * alpha * math.log(1 - x)) < 1e-10


@pytest.mark.parametrize("x", [-0.4, -0.05, 0.3])
def test_G_single_atom_linear(x):
    ge = evaluate_G(single_atom(1.0, 2.0), x)
    assert abs(ge.value - x) < 1e-12  # c x / 2 with c = 2


@pytest.mark.parametrize("name", ["mp05", "orth07"])
def test_G_small_argument(name):
    sp = SPECTRA[name]
    for x in (-1e-5, 1e-5):
        assert abs(evaluate_G(sp, x).value / (0.5 * sp.mean() * x) - 1) < 1e-3
