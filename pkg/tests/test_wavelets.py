import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from unfold.wavelets import (
    HAAR,
    SYM6,
    DyadicGrid,
    SampledFunction,
    WaveletCoefficients,
    basis_matrix,
    besov_seq_norm,
    dwt_forward,
    dwt_inverse,
    fwt,
    get_filter,
    index_of,
    iwt,
    level_of_index,
    project,
    sup_norm_constant,
    synthesize_basis_function,
)

FILTERS = [HAAR, SYM6]

# Commonly published least-asymmetric taps (12 significant digits are trustworthy).
PUBLISHED_SYM6 = [
    -0.007800708325034148, 0.0017677118642428036, 0.04472490177066578, -0.021060292512300564,
    -0.07263752278646252, 0.3379294217276218, 0.787641141030194, 0.4910559419267466,
    -0.048311742585633, -0.11799011114819057, 0.0034907120842174702, 0.015404109327027373,
]


# -- filters ----------------------------------------------------------------


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
def test_filter_is_orthonormal_qmf(filt):
    h = filt.h
    assert h.sum() == pytest.approx(math.sqrt(2), abs=1e-14)
    for shift in range(0, h.size, 2):
        expected = 1.0 if shift == 0 else 0.0
        assert np.dot(h[: h.size - shift], h[shift:]) == pytest.approx(expected, abs=1e-14)


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
def test_highpass_has_vanishing_moments(filt):
    k = np.arange(filt.support, dtype=float)
    for m in range(filt.vanishing_moments):
        # normalize the moment so the check is scale-free
        assert abs(np.dot(k**m, filt.g)) / np.dot(k**m, np.abs(filt.g)) < 1e-10


def test_sym6_matches_published_taps():
    assert np.max(np.abs(SYM6.h - np.array(PUBLISHED_SYM6))) < 2e-12


def test_filter_delay():
    assert HAAR.delay == 0
    assert SYM6.delay == 5


def test_get_filter_aliases():
    assert get_filter("Haar") is HAAR
    assert get_filter("db1") is HAAR
    assert get_filter("symmlet6") is SYM6
    assert get_filter(SYM6) is SYM6
    with pytest.raises(ValueError):
        get_filter("db4")


# -- grid and sampled functions ---------------------------------------------


def test_dyadic_grid():
    g = DyadicGrid(3)
    assert g.n == 8
    assert g.width == 0.125
    assert np.array_equal(g.points, np.arange(8) / 8)
    with pytest.raises(ValueError):
        DyadicGrid(0)


def test_sampled_function_validation():
    with pytest.raises(ValueError):
        SampledFunction.from_values([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        SampledFunction.from_values([1.0, np.nan])
    f = SampledFunction.from_values([1.0, 3.0])
    assert f.integral() == 2.0
    assert np.allclose(f.to_coefficients(), np.array([1.0, 3.0]) / math.sqrt(2))


# -- transform examples -------------------------------------------------------


def test_haar_constant_input_has_zero_details():
    g = SampledFunction.from_values([5.0, 5.0, 5.0, 5.0])
    c = dwt_forward(g, HAAR)
    assert c.data[0] == pytest.approx(5.0)
    assert np.allclose(c.data[1:], 0.0)


def test_haar_two_point_detail_sign():
    # detail = (even - odd)/sqrt(2)
    assert np.allclose(fwt(np.array([1.0, -1.0]), HAAR), [0.0, math.sqrt(2)])


def test_inverse_of_zero_is_zero():
    out = dwt_inverse(WaveletCoefficients(4, np.zeros(16)), SYM6)
    assert np.array_equal(out.values, np.zeros(16))


def test_unit_coarse_coefficient_is_constant_one():
    w = np.zeros(4)
    w[0] = 1.0
    assert np.allclose(dwt_inverse(WaveletCoefficients(2, w), HAAR).values, 1.0)


def test_transform_rejects_bad_input():
    with pytest.raises(ValueError):
        fwt(np.ones(6), HAAR)
    with pytest.raises(ValueError):
        fwt(np.ones(8), HAAR, coarse_level=3)
    with pytest.raises(ValueError):
        dwt_forward(SampledFunction.from_values(np.ones(8)), HAAR, coarse_level=3)
    with pytest.raises(ValueError):
        WaveletCoefficients(3, np.zeros(7))


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
@pytest.mark.parametrize("J", range(1, 11))
def test_round_trip_and_parseval(filt, J, rng):
    c = rng.standard_normal(1 << J)
    w = fwt(c, filt)
    assert np.max(np.abs(iwt(w, filt) - c)) < 1e-10
    assert abs(np.linalg.norm(w) - np.linalg.norm(c)) < 1e-10
    assert np.max(np.abs(fwt(iwt(c, filt), filt) - c)) < 1e-10


@pytest.mark.parametrize("coarse", [0, 2, 4])
def test_partial_decomposition_round_trip(coarse, rng):
    c = rng.standard_normal(64)
    w = fwt(c, SYM6, coarse_level=coarse)
    assert np.allclose(iwt(w, SYM6, coarse_level=coarse), c, atol=1e-12)


def test_transform_along_axis(rng):
    m = rng.standard_normal((8, 16))
    by_rows = fwt(m, SYM6, axis=1)
    assert np.allclose(by_rows, np.array([fwt(r, SYM6) for r in m]))
    by_cols = fwt(m.T, SYM6, axis=0)
    assert np.allclose(by_cols, by_rows.T)


@given(arrays(np.float64, st.sampled_from([2, 4, 8, 16, 32, 64]), elements=st.floats(-1e3, 1e3)), st.sampled_from(FILTERS))
def test_property_orthogonality(c, filt):
    w = fwt(c, filt)
    assert np.linalg.norm(w) == pytest.approx(np.linalg.norm(c), rel=1e-12, abs=1e-9)
    assert np.allclose(iwt(w, filt), c, atol=1e-9)


# -- basis functions ----------------------------------------------------------


def test_haar_mother_wavelet_samples():
    assert np.allclose(synthesize_basis_function((0, 0), HAAR, 2).values, [1, 1, -1, -1])


@pytest.mark.parametrize("J", [1, 3, 6])
def test_haar_scaling_function_is_one(J):
    assert np.allclose(synthesize_basis_function((-1, 0), HAAR, J).values, 1.0)


def test_sym6_scaling_function_is_one():
    assert np.allclose(synthesize_basis_function((-1, 0), SYM6, 7).values, 1.0, atol=1e-12)


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
@pytest.mark.parametrize("lam", [(-1, 0), (0, 0), (2, 3), (4, 15)])
def test_basis_function_unit_norm(filt, lam):
    v = synthesize_basis_function(lam, filt, 7).values
    assert math.sqrt(np.mean(v**2)) == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
@pytest.mark.parametrize("j", range(0, 6))
def test_synthesized_gram_is_identity(filt, j):
    J = 8
    rows = []
    for pos in range(1 << j):
        level = -1 if pos == 0 else int(math.log2(pos))
        k = 0 if pos == 0 else pos - (1 << level)
        rows.append(synthesize_basis_function((level, k), filt, J).values)
    B = np.array(rows)
    gram = B @ B.T / (1 << J)
    assert np.max(np.abs(gram - np.eye(1 << j))) < 1e-6


def test_synthesis_rejects_out_of_range():
    with pytest.raises(ValueError):
        synthesize_basis_function((3, 0), HAAR, 3)
    with pytest.raises(ValueError):
        synthesize_basis_function((1, 2), HAAR, 3)


def test_basis_matrix_rows_match_synthesis():
    B = basis_matrix(SYM6, 3, 6)
    v = synthesize_basis_function((2, 1), SYM6, 6).values
    assert np.allclose(B[index_of((2, 1))] * 2.0**3, v)


# -- indexing -----------------------------------------------------------------


def test_index_tree():
    assert list(level_of_index(3)) == [-1, 0, 1, 1, 2, 2, 2, 2]
    assert index_of((-1, 0)) == 0
    assert index_of((0, 0)) == 1
    assert index_of((2, 3)) == 7
    assert list(level_of_index(3, coarse_level=1)) == [-1, -1, 1, 1, 2, 2, 2, 2]
    with pytest.raises(ValueError):
        index_of((1, 2))


def test_coefficient_container(rng):
    data = rng.standard_normal(16)
    c = WaveletCoefficients(4, data)
    assert c[(1, 1)] == data[3]
    assert np.array_equal(c.detail(2), data[4:8])
    assert np.array_equal(c.restrict(2), data[:4])
    assert c.energy() == pytest.approx(float(data @ data))
    with pytest.raises(ValueError):
        c.detail(4)


# -- projection ---------------------------------------------------------------


def _in_vj(j, J, filt, rng):
    w = np.zeros(1 << J)
    w[: 1 << j] = rng.standard_normal(1 << j)
    return dwt_inverse(WaveletCoefficients(J, w), filt)


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
def test_projection_fixes_vj(filt, rng):
    g = _in_vj(3, 7, filt, rng)
    assert np.max(np.abs(project(g, 3, filt).values - g.values)) < 1e-10


@pytest.mark.parametrize("filt", FILTERS, ids=lambda f: f.name)
def test_projection_idempotent(filt, rng):
    g = SampledFunction.from_values(rng.standard_normal(128))
    p = project(g, 4, filt)
    assert np.max(np.abs(project(p, 4, filt).values - p.values)) < 1e-10


def test_haar_level_zero_projection_is_mean(rng):
    g = SampledFunction.from_values(rng.standard_normal(32))
    assert np.allclose(project(g, 0, HAAR).values, g.values.mean())


def test_projection_level_range():
    g = SampledFunction.from_values(np.ones(8))
    with pytest.raises(ValueError):
        project(g, 4, HAAR)


# -- Besov norm ---------------------------------------------------------------


def _single(J, pos):
    w = np.zeros(1 << J)
    w[pos] = 1.0
    return WaveletCoefficients(J, w)


def test_besov_examples():
    assert besov_seq_norm(WaveletCoefficients(4, np.zeros(16)), 1, 2, 2) == 0.0
    assert besov_seq_norm(_single(4, index_of((0, 0))), 1, 2, 2) == pytest.approx(1.0)
    assert besov_seq_norm(_single(4, index_of((1, 0))), 1, 2, 2) == pytest.approx(2.0)
    # the coarse slot counts at level 0
    assert besov_seq_norm(_single(4, 0), 3, 2, 2) == pytest.approx(1.0)


def test_besov_sup_conventions():
    w = np.zeros(8)
    w[index_of((1, 0))] = 3.0
    w[index_of((2, 1))] = -1.0
    c = WaveletCoefficients(3, w)
    # sigma = s + 1/2 for p = inf
    assert besov_seq_norm(c, 0.5, math.inf, math.inf) == pytest.approx(max(2 * 3.0, 4 * 1.0))
    assert besov_seq_norm(c, 1, 2, math.inf) == pytest.approx(max(2 * 3.0, 4 * 1.0))


def test_besov_rejects_negative_sigma():
    with pytest.raises(ValueError):
        besov_seq_norm(_single(3, 1), 0.1, 1, 2)


# -- sup-norm constants ---------------------------------------------------------


@pytest.mark.parametrize("j", range(0, 7))
def test_haar_sup_constant_exact(j):
    assert sup_norm_constant(HAAR, j, 8) == pytest.approx(2 ** (j / 2), rel=1e-12)


@pytest.mark.parametrize("j", [2, 4, 6])
def test_haar_sampled_sup_ratio_within_one_percent(j):
    # extremal element of V_j is one scaled indicator; random search plus that element
    B = basis_matrix(HAAR, j, 8) * 2.0**4
    rng = np.random.default_rng(j)
    coeffs = np.vstack([rng.standard_normal((2000, 1 << j)), B[:, 0]])
    ratios = np.max(np.abs(coeffs @ B), axis=1) / np.linalg.norm(coeffs, axis=1)
    assert ratios.max() == pytest.approx(2 ** (j / 2), rel=0.01)


def test_single_level_sup_bound_stable_across_levels():
    # ||sum_{|lambda|=j} beta psi||_inf <= C 2^{j/2} ||beta||_2 with C from the coarsest
    # level whose support fits inside the period
    J = 10
    consts = {}
    for j in range(4, 8):
        B = basis_matrix(SYM6, j + 1, J)[1 << j :] * 2.0 ** (J / 2)
        consts[j] = float(np.sqrt(np.max(np.sum(B**2, axis=0)))) / 2 ** (j / 2)
    C = consts[4]
    rng = np.random.default_rng(0)
    for j, c in consts.items():
        assert c <= C * 1.01
        B = basis_matrix(SYM6, j + 1, J)[1 << j :] * 2.0 ** (J / 2)
        beta = rng.standard_normal((200, 1 << j))
        ratio = np.max(np.abs(beta @ B), axis=1) / (2 ** (j / 2) * np.linalg.norm(beta, axis=1))
        assert ratio.max() <= C * 1.01
