import math

import numpy as np
import pytest

from vibrosync import _trig


def sin_line(coeff, radicand=1, mult=1):
    return _trig.TrigPoly.sin_line(((radicand, mult),), coeff)


def cos_line(coeff, radicand=1, mult=1):
    return _trig.TrigPoly({("cos", ((radicand, mult),)): coeff})


def test_constant_and_eval():
    p = _trig.TrigPoly.constant(2.5)
    assert p.mean() == 2.5
    assert p(0.7) == 2.5
    assert _trig.TrigPoly.zero().is_zero()


def test_sin_cos_product_to_sum():
    s = sin_line(1.0, radicand=2)  # sin(sqrt2 t)
    c = cos_line(1.0, radicand=2)
    prod = s * c  # = 0.5 sin(2 sqrt2 t), mean zero
    assert prod.mean() == pytest.approx(0.0, abs=1e-15)
    for t in (0.0, 0.3, 1.7):
        assert prod(t) == pytest.approx(0.5 * math.sin(2 * math.sqrt(2) * t))


def test_square_has_dc():
    s = sin_line(3.0)
    sq = s * s  # 9 sin^2 t = 4.5 - 4.5 cos 2t
    assert sq.mean() == pytest.approx(4.5)
    assert sq(0.25) == pytest.approx(9 * math.sin(0.25) ** 2)


def test_incommensurable_products_have_no_dc():
    # frequencies 1 and sqrt2 are rationally independent: no DC appears
    assert (sin_line(1.0, radicand=1) * sin_line(1.0, radicand=2)).mean() == 0.0
    # identical irrational frequencies do interfere
    assert (sin_line(1.0, radicand=2) * sin_line(1.0, radicand=2)).mean() == \
        pytest.approx(0.5)


def test_antiderivative_zero_mean():
    s = sin_line(2.0, radicand=2)
    F = s.antiderivative_zero_mean()
    assert F.mean() == pytest.approx(0.0, abs=1e-15)
    beta = math.sqrt(2)
    for t in (0.1, 0.9):  # F = -(2/beta) cos(beta t)
        assert F(t) == pytest.approx(-2 / beta * math.cos(beta * t))
    with pytest.raises(ValueError):
        _trig.TrigPoly.constant(1.0).antiderivative_zero_mean()


def test_squarefree_radicands_sequence():
    gen = _trig.squarefree_radicands()
    got = [next(gen) for _ in range(8)]
    assert got == [1, 2, 3, 5, 6, 7, 10, 11]


def test_transition_series_single_line_and_conjugated_mean():
    # one vibration line u sin(beta t) on slot (1, 0)
    u, beta = 1.0, 1.0
    p = _trig.zeros_matrix(2)
    p[1][0] = sin_line(u, radicand=1)
    phi = _trig.transition_series(p, max_depth=4)
    # zero-mean primitive convention: phi[1][0] = -(u/beta) cos(beta t)
    t = 0.6
    assert phi[0][0](t) == pytest.approx(1.0)
    assert phi[1][1](t) == pytest.approx(1.0)
    assert phi[0][1](t) == pytest.approx(0.0)
    assert phi[1][0](t) == pytest.approx(-(u / beta) * math.cos(beta * t))

    a = np.array([[0.0, 1.0], [0.0, 0.0]])
    mean = _trig.conjugated_mean(a, p)
    # closed form: averaged (1,0) entry is -a01 u^2 / (2 beta^2) = -0.5
    assert mean[1, 0] == pytest.approx(-0.5, abs=1e-12)
    assert mean[0, 1] == pytest.approx(1.0)
    assert mean[0, 0] == pytest.approx(0.0, abs=1e-12)
    assert mean[1, 1] == pytest.approx(0.0, abs=1e-12)


def test_conjugated_mean_amplitude_and_frequency_scaling():
    a = np.array([[0.0, -2.0], [0.0, 0.0]])
    for u, rad in ((1.5, 1), (0.7, 2)):
        p = _trig.zeros_matrix(2)
        p[1][0] = sin_line(u, radicand=rad)
        mean = _trig.conjugated_mean(a, p)
        assert mean[1, 0] == pytest.approx(2.0 * u ** 2 / (2 * rad), abs=1e-12)


def test_transition_series_raises_on_non_nilpotent():
    p = _trig.zeros_matrix(2)
    p[1][0] = sin_line(1.0, radicand=1)
    p[0][1] = sin_line(1.0, radicand=1)
    with pytest.raises(ValueError):
        _trig.transition_series(p, max_depth=60)


def test_inverse_of_unitriangular():
    p = _trig.zeros_matrix(3)
    p[1][0] = sin_line(0.8, radicand=2)
    p[2][1] = sin_line(1.3, radicand=3)
    phi = _trig.transition_series(p, max_depth=6)
    inv = _trig.inverse_of_unitriangular(phi)
    prod = _trig.mat_mul(inv, phi)
    ident = _trig.identity_matrix(3)
    for i in range(3):
        for j in range(3):
            diff = prod[i][j] - ident[i][j]
            for t in (0.0, 0.4, 2.2):
                assert abs(diff(t)) < 1e-10
