import itertools
import json
import math
from fractions import Fraction
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from freespec import BranchError, ConfigError, ConvergenceError, DivergenceError
from freespec import freeprob as fp
from freespec.limitlaws import LimitLaw
from freespec.spectra import EmpiricalMeasure

# -- oracle: non-crossing partitions ----------------------------------------


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        yield [[first]] + part
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1 :]


def _crossing(blocks):
    owner = {x: i for i, b in enumerate(blocks) for x in b}
    pts = sorted(owner)
    for a, b, c, d in itertools.combinations(pts, 4):
        if owner[a] == owner[c] != owner[b] == owner[d]:
            return True
    return False


@lru_cache(maxsize=None)
def nc_partitions(n):
    return tuple(tuple(tuple(sorted(b)) for b in p) for p in _set_partitions(list(range(n))) if not _crossing(p))


def kreweras(blocks, n):
    """Coarsest partition of primed points whose union with ``blocks`` stays non-crossing."""
    need = n + 1 - len(blocks)
    pi = [[2 * x for x in b] for b in blocks]
    for sigma in nc_partitions(n):
        if len(sigma) == need and not _crossing(pi + [[2 * x + 1 for x in b] for b in sigma]):
            return sigma
    raise AssertionError("no complement found")


def free_cumulants(m):
    """Moment-to-free-cumulant inversion by recursion over NC(n)."""
    k = {}
    for n in range(1, len(m) + 1):
        acc = Fraction(0)
        for p in nc_partitions(n):
            if len(p) == 1:
                continue
            acc += math.prod(k[len(b)] for b in p)
        k[n] = m[n - 1] - acc
    return k


def free_product_moments(ma, mb):
    """``phi((ab)^n) = sum_{pi in NC(n)} kappa_pi[a] m_{K(pi)}[b]``."""
    ka = free_cumulants(ma)
    out = []
    for n in range(1, len(ma) + 1):
        tot = Fraction(0)
        for p in nc_partitions(n):
            kp = math.prod(ka[len(b)] for b in p)
            mk = math.prod(mb[len(b) - 1] for b in kreweras(p, n))
            tot += kp * mk
        out.append(tot)
    return out


def discrete_moments(atoms, weights, k):
    return [sum(w * a**j for a, w in zip(atoms, weights)) for j in range(1, k + 1)]


def test_nc_oracle_counts():
    assert [len(nc_partitions(n)) for n in range(1, 7)] == [1, 2, 5, 14, 42, 132]
    assert free_cumulants([1, 2, 5, 14])  == {1: 1, 2: 1, 3: 1, 4: 1}


# -- series transforms ------------------------------------------------------

MP1 = [math.comb(2 * k, k) // (k + 1) for k in range(1, 17)]
SEMI = [0 if k % 2 else math.comb(k, k // 2) // (k // 2 + 1) for k in range(1, 17)]
T1 = [0 if k % 2 else 1 for k in range(1, 17)]


def test_r_transform_examples():
    assert list(fp.r_transform(SEMI[:8]).coeffs) == [0, 1, 0, 0, 0, 0, 0, 0]
    a = Fraction(3, 2)
    assert list(fp.r_transform([a**k for k in range(1, 7)]).coeffs) == [a, 0, 0, 0, 0, 0]
    assert list(fp.r_transform(MP1[:10]).coeffs) == [1] * 10


def test_rtilde_is_additive_under_free_sum():
    # delta_a (+) delta_b = delta_{a+b}; semicircle(1) (+) semicircle(1) = semicircle(2)
    a, b = Fraction(1, 3), Fraction(-2, 5)
    ra = fp.rtilde([a**k for k in range(1, 9)]).coeffs
    rb = fp.rtilde([b**k for k in range(1, 9)]).coeffs
    rab = fp.rtilde([(a + b) ** k for k in range(1, 9)]).coeffs
    assert [x + y for x, y in zip(ra, rb)] == list(rab)
    s1 = fp.rtilde(LimitLaw("semicircle", variance=1).moments(10)).coeffs
    s2 = fp.rtilde(LimitLaw("semicircle", variance=2).moments(10)).coeffs
    assert np.allclose(2 * np.array(s1, float), np.array(s2, float), atol=1e-6)


def test_s_transform_examples():
    assert list(fp.s_transform([1] * 8).coeffs) == [1] + [0] * 7
    for y in (Fraction(1, 2), Fraction(1), Fraction(1, 3)):
        m = LimitLaw("marchenko-pastur", y=y).moments(8)
        assert list(fp.s_transform(m).coeffs) == [(-y) ** k for k in range(8)]
    with pytest.raises(BranchError):
        fp.s_transform(SEMI[:4])


def test_mp_half_s_value():
    s = LimitLaw("marchenko-pastur", y=0.5).s_transform()
    assert s(-0.25) == pytest.approx(8 / 7)


def test_inverse_mp_product_series():
    inv_mp = fp.TransformSeries("S", (0, -1, 0, 0, 0, 0))
    mp = fp.s_transform(MP1[:6])
    prod = fp.free_mult_s(mp, inv_mp)
    # -z/(1+z) = -z + z^2 - z^3 ...
    assert list(prod.coeffs) == [0, -1, 1, -1, 1, -1]


def test_free_mult_examples():
    one = fp.TransformSeries("S", (1, 0, 0, 0, 0, 0, 0, 0))
    mp = fp.s_transform(MP1[:8])
    assert fp.free_mult_s(one, mp).coeffs == mp.coeffs
    fc2 = fp.free_mult_s(mp, mp)
    assert list(fc2.coeffs) == [(-1) ** k * (k + 1) for k in range(8)]  # 1/(1+z)^2
    assert list(fp.moments_from_s(fc2).moments[:4]) == [1, 3, 12, 55]


def test_free_mult_matches_nc_oracle():
    a = discrete_moments([Fraction(1), Fraction(2)], [Fraction(3, 10), Fraction(7, 10)], 6)
    b = discrete_moments([Fraction(1, 2), Fraction(3)], [Fraction(1, 2), Fraction(1, 2)], 6)
    got = fp.moments_from_s(fp.free_mult_s(fp.s_transform(a), fp.s_transform(b))).moments
    assert list(got) == free_product_moments(a, b)


@given(
    st.lists(st.fractions(min_value=Fraction(1, 4), max_value=3, max_denominator=6), min_size=2, max_size=3),
    st.lists(st.fractions(min_value=Fraction(1, 4), max_value=3, max_denominator=6), min_size=1, max_size=2),
)
def test_free_mult_oracle_property(xa, xb):
    wa = [Fraction(1, len(xa))] * len(xa)
    wb = [Fraction(1, len(xb))] * len(xb)
    ma, mb = discrete_moments(xa, wa, 5), discrete_moments(xb, wb, 5)
    got = fp.moments_from_s(fp.free_mult_s(fp.s_transform(ma), fp.s_transform(mb))).moments
    assert list(got) == free_product_moments(ma, mb)


def test_rectangular_compose_examples():
    y1 = Fraction(1, 3)
    smu = fp.TransformSeries("S", tuple((-y1) ** k for k in range(6)))
    snu = fp.TransformSeries("S", tuple((-1) ** k for k in range(6)))
    got = fp.rectangular_compose(smu, snu, y1)
    assert list(got.coeffs) == [(k + 1) * (-y1) ** k for k in range(6)]  # 1/(1+y1 z)^2
    assert fp.rectangular_compose(smu, snu, 1).coeffs == fp.free_mult_s(smu, snu).coeffs
    one = fp.TransformSeries("S", (1, 0, 0, 0, 0, 0))
    assert fp.rectangular_compose(smu, one, 0.4).coeffs == pytest.approx(smu.coeffs, abs=1e-15)
    with pytest.raises(ConfigError):
        fp.rectangular_compose(smu, snu, 0.0)


def test_symmetric_s_examples():
    t1_long = [0 if k % 2 else 1 for k in range(1, 81)]
    assert fp.symmetric_s(t1_long)(-0.5) == pytest.approx(1j, abs=1e-9)
    s_sc = fp.symmetric_s(SEMI)
    val = s_sc(-0.25)
    assert abs(val) == pytest.approx(2.0, abs=1e-12)
    assert val == pytest.approx(2j, abs=1e-12)
    with pytest.raises(ConfigError):
        fp.symmetric_s(MP1[:4])


@given(st.floats(0.2, 5.0), st.floats(-0.9, -0.05))
def test_symmetric_s_dilation(c, z):
    scaled = [c**k * m for k, m in enumerate(SEMI, start=1)]
    a = fp.symmetric_s(SEMI)(z)
    b = fp.symmetric_s(scaled)(z)
    assert b == pytest.approx(a / c, rel=1e-9)


@given(st.floats(1e-8, 1e-2))
def test_symmetric_branch_has_nonnegative_imaginary_part(eps):
    for m in (SEMI, T1):
        assert fp.symmetric_s(m)(-eps).imag >= 0


def test_nica_identity():
    assert fp.nica_residual([1] * 8) == 0
    for m in (MP1, SEMI, T1):
        assert fp.nica_residual(m) <= 1e-9


def test_rtilde_inverse_in_symmetric_case():
    # Rtilde^{-1}(z) = -sqrt(z) for the semicircle
    inv = fp._rtilde_inverse_symmetric(fp.rtilde(SEMI))
    assert inv(-0.36) == pytest.approx(-0.6j, abs=1e-12)
    assert inv(-0.36).imag <= 0


def test_roundtrips_order_16():
    fc2 = fp.moments_from_s(fp.TransformSeries("S", tuple((-1) ** k * (k + 1) for k in range(16)))).moments
    for m in (MP1, list(fc2), [float(x) for x in MP1]):
        res = fp.roundtrip_residuals(m)
        assert res["R"] <= 1e-9 and res["S"] <= 1e-9
    assert fp.roundtrip_residuals(SEMI)["R"] <= 1e-9


@given(
    st.lists(st.floats(0.1, 1.5), min_size=1, max_size=4),
    st.lists(st.floats(0.1, 1.0), min_size=4, max_size=4),
)
def test_roundtrip_property(atoms, w):
    w = np.array(w[: len(atoms)])
    w = w / w.sum()
    m = [float(np.dot(w, np.array(atoms) ** k)) for k in range(1, 17)]
    res = fp.roundtrip_residuals(m)
    assert res["R"] <= 1e-9 * max(1.0, max(m))
    assert res["S"] <= 1e-9 * max(1.0, max(m))


def test_moments_from_r_and_rtilde_agree():
    r = fp.r_transform(MP1[:8])
    assert fp.moments_from_r(r).moments == tuple(MP1[:8])


def test_push_square_and_hankel():
    ms = fp.push_square(SEMI[:8])
    assert ms.moments == (1, 2, 5, 14)
    assert fp.MomentSeries(tuple(SEMI[:8])).is_symmetric
    assert fp.MomentSeries((1, 2, 5, 14)).hankel_ok()
    assert not fp.MomentSeries((1, 0.5)).hankel_ok()  # variance would be negative
    with pytest.raises(ConfigError):
        fp.MomentSeries(())


def test_transform_series_json():
    ts = fp.symmetric_s(SEMI[:8])
    back = fp.TransformSeries.from_json(ts.to_json())
    assert back.grading == "sqrt_z" and back.branch == "upper"
    assert back(-0.3) == pytest.approx(ts(-0.3))
    d = json.loads(ts.to_json())
    assert all(len(pair) == 2 for pair in d["coefficients"])
    d["extra"] = 1
    with pytest.raises(ConfigError):
        fp.TransformSeries.from_json(json.dumps(d))
    with pytest.raises(ConfigError):
        fp.TransformSeries("S", (1,), "log")


# -- moments of measures ----------------------------------------------------


def test_moments_of_examples():
    assert fp.moments_of(LimitLaw("point-mass", a=0.0), 4).moments == (0, 0, 0, 0)
    sc = LimitLaw("semicircle", variance=1.0)
    assert fp.moments_of(sc, 4).moments == (0, 1, 0, 2)
    quad = [integrate.quad(lambda x: x**k * math.sqrt(4 - x * x) / (2 * math.pi), -2, 2)[0] for k in range(1, 5)]
    assert quad == pytest.approx([0, 1, 0, 2], abs=1e-10)
    assert fp.moments_of(LimitLaw("marchenko-pastur", y=1), 3).moments == (1, 2, 5)
    assert fp.moments_of(EmpiricalMeasure([1.0, 3.0]), 2).moments == (2.0, 5.0)
    with pytest.raises(DivergenceError):
        fp.moments_of(LimitLaw("spherical-sv"), 1)


# -- T(alpha) ----------------------------------------------------------------


def test_t_alpha_examples():
    t = fp.t_alpha_transforms(1.0)
    assert t.S(-0.5) == pytest.approx(1j)
    assert t.G(1j) == pytest.approx(-0.5j)
    assert -t.G(1j) == pytest.approx(0.5j)  # g = -G
    ta = fp.t_alpha_transforms(0.6 + 0.8j)
    for z in (1e-3, 1e-4):
        assert ta.Rtilde(z) == pytest.approx(z * z, rel=1e-5)
    with pytest.raises(ConfigError):
        fp.t_alpha_transforms(0)


def test_t_alpha_closed_forms_match_series():
    a = 0.7
    t = fp.t_alpha_transforms(a)
    m = t.moments(12)
    z = 0.2 + 0.1j
    assert t.M(z) == pytest.approx(sum(mk * z**k for k, mk in enumerate(m, start=1)), rel=1e-8)
    rt = fp.rtilde(m)
    assert t.Rtilde(0.1) == pytest.approx(rt(0.1), rel=1e-9)


@given(st.floats(0.1, 3.0), st.floats(-0.999, -0.001).filter(lambda z: abs(z + 0.5) > 1e-4))
def test_t_alpha_nica_identity(a, z):
    t = fp.t_alpha_transforms(a)
    u = z * t.S(z)
    vals = [t.Rtilde(u, s) for s in (1, -1)]
    assert min(abs(v - z) for v in vals) <= 1e-9
    if z > -0.5:
        assert abs(vals[0] - z) <= 1e-9


@given(st.floats(-0.99, -0.01))
def test_t_alpha_s_branch(z):
    assert fp.t_alpha_transforms(1.3).S(z).imag >= 0


# -- free additive convolution ----------------------------------------------

GRID = np.linspace(-4.0, 4.0, 1601)


def test_free_add_semicircles():
    sc = LimitLaw("semicircle", variance=1.0)
    out = fp.free_add(sc, sc, GRID)
    ref = LimitLaw("semicircle", variance=2.0)
    bulk = np.abs(GRID) <= 0.95 * 2 * math.sqrt(2)
    assert np.max(np.abs(out.density - ref.density(GRID))[bulk]) <= 5e-3
    assert out.density[800] == pytest.approx(1 / (math.pi * math.sqrt(2)), abs=2e-3)
    assert np.all(out.density >= 0)
    assert 0.999 <= out.mass <= 1.001


def test_free_add_point_mass_translates():
    nu = LimitLaw("semicircle", variance=1.0)
    a = 0.7
    out = fp.free_add(LimitLaw("point-mass", a=a), nu, GRID)
    ref = -np.imag(nu.cauchy(GRID - a + 1e-3j)) / np.pi
    assert np.max(np.abs(out.density - ref)) <= 1e-6
    swapped = fp.free_add(nu, LimitLaw("point-mass", a=a), GRID)
    assert np.max(np.abs(swapped.density - ref)) <= 1e-6


def test_free_add_second_moment_with_shift_law():
    sc = LimitLaw("semicircle", variance=1.0)
    t1 = LimitLaw("symmetric-two-point", a=1.0)
    out = fp.free_add(sc, t1, np.linspace(-4, 4, 4001))
    assert out.mass == pytest.approx(1.0, abs=1e-3)
    assert out.moments(2)[1] == pytest.approx(2.0, abs=0.01)


def test_free_add_accepts_grid_measures():
    sc = LimitLaw("semicircle", variance=1.0)
    x = np.linspace(-2, 2, 1001)
    gm = fp.GridMeasure(x, sc.density(x))
    grid = np.linspace(-2.5, 2.5, 51)
    out = fp.free_add(gm, sc, grid)
    ref = LimitLaw("semicircle", variance=2.0).density(grid)
    bulk = np.abs(grid) <= 2.5
    assert np.max(np.abs(out.density - ref)[bulk]) <= 5e-3


def test_free_add_errors():
    sc = LimitLaw("semicircle", variance=1.0)
    with pytest.raises(ConvergenceError):
        fp.free_add(sc, sc, GRID, max_iter=2)
    with pytest.raises(ConfigError):
        fp.free_add(sc, sc, GRID, eta=0)
    with pytest.raises(ConfigError):
        fp.free_add(sc, object(), GRID)


@given(st.floats(-5, 5), st.floats(1e-3, 5))
def test_reciprocal_cauchy_increases_height(x, y):
    z = complex(x, y)
    for law in (
        LimitLaw("semicircle", variance=1.5),
        LimitLaw("symmetric-two-point", a=0.8),
        LimitLaw("marchenko-pastur", y=0.5),
    ):
        g = complex(law.cauchy(z))
        assert g.imag < 0
        assert (1 / g).imag >= y * (1 - 1e-9)


@given(st.floats(1e-3, 50))
def test_symmetric_stieltjes_on_imaginary_axis(y):
    for law in (LimitLaw("semicircle", variance=1.0), LimitLaw("symmetric-two-point", a=2.0)):
        g = -complex(law.cauchy(1j * y))
        assert abs(g.real) <= 1e-12 and g.imag > 0


def test_grid_measure_validation():
    with pytest.raises(ConfigError):
        fp.GridMeasure([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(ConfigError):
        fp.GridMeasure([0.0, 1.0], [1.0])
