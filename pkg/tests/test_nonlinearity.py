import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wavenoise.nonlinearity import Nonlinearity, apply_f, dealias_points, lipschitz_check
from wavenoise.spectral import LatticeSpec, SpectralField, sobolev_norm


@pytest.mark.parametrize("text,kind,c", [
    ("zero", "zero", 0.0), ("linear:2.5", "linear", 2.5), ("sin:1", "sin", 1.0),
    ("smoothsat:-3", "smoothsat", -3.0), (" SIN:0.5 ", "sin", 0.5),
])
def test_parse(text, kind, c):
    f = Nonlinearity.parse(text)
    assert (f.kind, f.c) == (kind, c)
    assert Nonlinearity.parse(str(f)) == f


@pytest.mark.parametrize("text", ["cubic:1", "sin", "linear:", "exp:2"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        Nonlinearity.parse(text)


def test_cb2_flags():
    assert Nonlinearity.parse("zero").cb2
    assert Nonlinearity.parse("sin:2").cb2
    assert Nonlinearity.parse("smoothsat:1").cb2
    assert not Nonlinearity.parse("linear:1").cb2


def test_lipschitz_check_examples():
    assert lipschitz_check(Nonlinearity()) == 0.0
    assert lipschitz_check(Nonlinearity.parse("linear:-1.5")) == pytest.approx(1.5)
    for text in ("sin:2", "smoothsat:3", "linear:0.7"):
        f = Nonlinearity.parse(text)
        est = lipschitz_check(f, 5000, rng=np.random.default_rng(1))
        assert est <= f.lipschitz_const * (1 + 1e-9)
        assert est >= 0.9 * f.lipschitz_const
    with pytest.raises(ValueError):
        lipschitz_check(Nonlinearity.parse("sin:1"), 10)


def test_apply_f_examples():
    lat = LatticeSpec(2, 4)
    u = SpectralField.cosine(lat, (1, 2), 0.8)
    assert np.all(apply_f(Nonlinearity(), u).coeffs == 0)
    lin = apply_f(Nonlinearity.parse("linear:3"), u)
    assert np.array_equal(lin.coeffs, 3 * u.coeffs)
    const = SpectralField.from_modes(lat, {(0, 0): np.pi / 2})
    out = apply_f(Nonlinearity.parse("sin:1"), const)
    assert out.coeffs[0, lat.zero_index] == pytest.approx(1.0, abs=1e-14)
    assert np.abs(np.delete(out.coeffs[0], lat.zero_index)).max() < 1e-14
    with pytest.raises(ValueError):
        apply_f(Nonlinearity.parse("sin:1"), SpectralField.zeros(lat, 2))


def _aliasing(f, n, level, seed):
    # oracle: Fourier coefficients of f(u) by a much finer quadrature
    lat = LatticeSpec(2, n)
    u = SpectralField.random(lat, np.random.default_rng(seed), decay=2.0)
    u = u * (0.5 / sobolev_norm(u, 0.0))
    fine = SpectralField.from_grid(lat, f(u.to_grid(12 * n + 8)))
    return sobolev_norm(apply_f(f, u, level) - fine, 0.0) / sobolev_norm(fine, 0.0)


@pytest.mark.parametrize("n", [8, 12])
def test_aliasing_residual_at_level_two(n):
    f = Nonlinearity.parse("sin:1.3")
    assert max(_aliasing(f, n, 2.0, seed) for seed in range(5)) < 1e-6


def test_aliasing_residual_shrinks_with_oversampling():
    f = Nonlinearity.parse("smoothsat:2")
    res = [max(_aliasing(f, 8, lev, seed) for seed in range(3)) for lev in (2.0, 3.0, 4.0)]
    assert res[0] > res[1] > res[2]
    assert res[2] < 1e-8


def test_dealias_points():
    lat = LatticeSpec(2, 8)
    assert dealias_points(lat, 1.0) >= 17
    assert dealias_points(lat, 2.0) >= 34
    with pytest.raises(ValueError):
        dealias_points(lat, 0.5)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), kind=st.sampled_from(["sin:1.5", "smoothsat:2", "linear:-1"]),
       scale=st.floats(0.1, 5.0))
def test_linear_growth_and_lipschitz_in_l2(seed, kind, scale):
    f = Nonlinearity.parse(kind)
    lat = LatticeSpec(2, 4)
    rng = np.random.default_rng(seed)
    u = SpectralField.random(lat, rng, decay=1.0) * scale
    w = SpectralField.random(lat, rng, decay=1.0) * scale
    fu, fw = apply_f(f, u), apply_f(f, w)
    L = f.lipschitz_const
    C = 2 * max(abs(float(f(0.0))), L)
    assert sobolev_norm(fu, 0.0) <= C * (1 + sobolev_norm(u, 0.0))
    assert sobolev_norm(fu - fw, 0.0) <= L * sobolev_norm(u - w, 0.0) * (1 + 1e-6) + 1e-12
