import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from unfold.errors import ExponentOverflow, InfeasibleTarget
from unfold.estimator import (
    EstimatorConfig,
    ExpFamilyModel,
    cutoff_level,
    empirical_coeffs,
    estimate,
    estimate_linear,
    estimate_nonlinear,
    hessian,
    information_projection,
    invert_thresholded,
    level_thresholds,
    linear_level,
    log_intensity,
    moments,
    soft_threshold,
    threshold_schedule,
)
from unfold.operators import GalerkinMatrix, KernelSpec, build_stiffness_matrix, wavelet_galerkin_matrix
from unfold.simulate import CountData, IntensitySpec, fold_intensity, simulate_counts
from unfold.wavelets import HAAR, SYM6, basis_matrix

FILTERS = [HAAR, SYM6]
fid = lambda f: f.name  # noqa: E731


def _random_theta(rng, j, scale=0.5):
    theta = rng.standard_normal(1 << j) * scale
    theta[0] = rng.uniform(-1, 1)
    return theta


# -- empirical coefficients ----------------------------------------------------


def test_empirical_single_event():
    coeffs = empirical_coeffs(CountData(1, [1, 0], 1.0), HAAR)
    assert np.allclose(coeffs.data, [1.0, 1.0], atol=1e-15)


def test_empirical_zero_counts():
    assert not np.any(empirical_coeffs(CountData(4, np.zeros(16, int), 100.0), SYM6).data)


@pytest.mark.parametrize("filt", FILTERS, ids=fid)
def test_empirical_coeffs_integrate_atoms(filt, rng):
    # one atom per event at its bin point: (1/t) sum_k N_k psi(x_k)
    J, t = 5, 37.0
    counts = rng.integers(0, 20, 1 << J)
    data = CountData(J, counts, t)
    values = basis_matrix(filt, J, J) * 2.0 ** (J / 2)
    expected = values @ counts / t
    assert np.allclose(empirical_coeffs(data, filt).data, expected, atol=1e-12)


def test_empirical_needs_positive_time():
    with pytest.raises(ValueError):
        empirical_coeffs(CountData(1, [0, 0], 0.0), HAAR)


# -- thresholding ----------------------------------------------------------------


@pytest.mark.parametrize("x, eps, expected", [(3, 1, 2), (-3, 1, -2), (0.5, 1, 0), (-0.5, 1, 0), (2, 0, 2)])
def test_soft_threshold_examples(x, eps, expected):
    assert soft_threshold(x, eps) == expected


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_soft_threshold_contraction(a, b, eps):
    assert abs(soft_threshold(a, eps) - soft_threshold(b, eps)) <= abs(a - b) * (1 + 1e-15) + 1e-9


@given(st.floats(-1e6, 1e6), st.floats(0, 1e6))
def test_soft_threshold_shrinks(x, eps):
    y = soft_threshold(x, eps)
    assert abs(y) <= abs(x)
    assert y == 0 or math.copysign(1, y) == math.copysign(1, x)


def test_threshold_schedule_examples():
    for level in (-1, 0, 3, 7):
        assert threshold_schedule(level, 1.0, 1.0) == 0.0
    assert threshold_schedule((0, 0), math.e, 1.0) == pytest.approx(0.60653066, abs=1e-8)
    assert threshold_schedule((3, 5), math.e, 1.0) == pytest.approx(4.85224527, abs=1e-8)
    assert threshold_schedule((-1, 0), math.e, 1.0) == threshold_schedule((0, 0), math.e, 1.0)


def test_level_thresholds_layout():
    eps = level_thresholds(3, math.e, 1.0)
    base = math.exp(-0.5)
    assert np.allclose(eps, base * np.array([1, 1, 2, 2, 4, 4, 4, 4]))


def test_cutoff_examples():
    assert cutoff_level(2**4, 1.0, 10) == 2
    assert cutoff_level(1e8, 1.0, 10) == 10
    assert cutoff_level(1e8, 1.0, 100) == 14


@given(st.integers(1, 12), st.sampled_from([0.5, 1.0, 1.5, 2.0]))
def test_cutoff_equality_case(j, nu):
    assert cutoff_level(2.0 ** (2 * nu * j), nu, 100) == j


def test_cutoff_needs_t_above_one():
    with pytest.raises(ValueError):
        cutoff_level(1.0, 1.0, 10)


def test_linear_level_examples():
    assert linear_level(2**10, 1.0, 1.0, 10) == 2
    assert linear_level(2**10, 1.0, 1.0, 1) == 1


def test_linear_level_monotone_in_t():
    ts = np.logspace(0.1, 12, 200)
    levels = [linear_level(t, 1.5, 1.0, 20) for t in ts]
    assert all(a <= b for a, b in zip(levels, levels[1:]))


# -- Galerkin inversion ----------------------------------------------------------


def test_invert_identity_without_thresholds(rng):
    beta = rng.standard_normal(8)
    assert np.allclose(invert_thresholded(GalerkinMatrix.from_matrix(np.eye(8)), beta, 0.0), beta)


def test_invert_kill_zone_gives_zero():
    Kj = GalerkinMatrix.from_matrix([[1.0, 0.0], [0.0, 0.0]])  # singular, never touched
    assert np.array_equal(invert_thresholded(Kj, [0.2, -0.3], [1.0, 1.0]), [0.0, 0.0])


def test_invert_two_by_two():
    Kj = GalerkinMatrix.from_matrix([[2.0, 1.0], [1.0, 2.0]])
    assert np.allclose(invert_thresholded(Kj, [1.5, 0.2], [0.5, 0.5]), [2 / 3, -1 / 3])


def test_invert_dimension_mismatch():
    with pytest.raises(ValueError):
        invert_thresholded(GalerkinMatrix.from_matrix(np.eye(2)), [1.0, 2.0, 3.0, 4.0], 0.0)


# -- information projection -------------------------------------------------------


@pytest.mark.parametrize("filt", FILTERS, ids=fid)
def test_projection_constant_family(filt):
    model = information_projection([1.0], filt, 6)
    assert model.theta[0] == 0.0
    assert model.iterations == 0
    model = information_projection([2.0], filt, 6)
    assert abs(model.theta[0] - math.log(2.0)) < 1e-10
    assert np.allclose(model.values(), 2.0, rtol=1e-12)


@pytest.mark.parametrize("filt", FILTERS, ids=fid)
@pytest.mark.parametrize("j", [1, 2, 3, 4])
def test_projection_fixed_point(filt, j, rng):
    J = 7
    for _ in range(3):
        theta = _random_theta(rng, j)
        alpha = moments(np.exp(log_intensity(theta, filt, J)), filt, j)
        model = information_projection(alpha, filt, J)
        assert np.max(np.abs(model.theta - theta)) < 1e-6
        assert model.residual <= 1e-8
        assert np.max(np.abs(model.moments() - alpha)) <= 1e-8


def test_hessian_matches_basis_oracle(rng):
    J, j = 6, 4
    f = np.exp(rng.standard_normal(1 << J))
    B = basis_matrix(SYM6, j, J)
    assert np.allclose(hessian(f, SYM6, j), B @ np.diag(f) @ B.T, atol=1e-12)


def test_moments_match_basis_oracle(rng):
    J, j = 6, 3
    f = np.exp(rng.standard_normal(1 << J))
    values = basis_matrix(SYM6, j, J) * 2.0 ** (J / 2)
    assert np.allclose(moments(f, SYM6, j), values @ f * 2.0**-J, atol=1e-12)


@pytest.mark.parametrize("alpha0", [0.0, -1.0])
def test_projection_rejects_nonpositive_mass(alpha0):
    with pytest.raises(InfeasibleTarget):
        information_projection([alpha0, 0.1], HAAR, 4)


def test_projection_rejects_nonfinite():
    with pytest.raises(InfeasibleTarget):
        information_projection([1.0, float("nan")], HAAR, 4)


def test_projection_outside_family_fails_loudly():
    # |<f, psi_00>| <= <f, 1> for Haar, so this target has no positive density
    with pytest.raises((InfeasibleTarget, ExponentOverflow)):
        information_projection([1.0, 1.5], HAAR, 5)


def test_projection_shape_checks():
    with pytest.raises(ValueError):
        information_projection([1.0, 0.0, 0.0], HAAR, 4)
    with pytest.raises(ValueError):
        information_projection(np.ones(32), HAAR, 4)


def test_estimator_config_validation():
    with pytest.raises(ValueError):
        EstimatorConfig(mode="hard")
    with pytest.raises(ValueError):
        EstimatorConfig(nu=0.0)
    with pytest.raises(ValueError):
        EstimatorConfig(tol=0.0)
    with pytest.raises(ValueError):
        EstimatorConfig(mode="linear")


# -- pipelines --------------------------------------------------------------------


def _exact_counts(theta, filt, J, t):
    f = np.exp(log_intensity(theta, filt, J))
    return CountData(J, np.rint(t * 2.0**-J * f).astype(np.int64), t)


@pytest.mark.parametrize("filt", FILTERS, ids=fid)
def test_identity_operator_fixed_point(filt, rng):
    J, j = 6, 3
    K = build_stiffness_matrix(KernelSpec("identity"), J)
    theta = _random_theta(rng, j)
    data = _exact_counts(theta, filt, J, 1e15)
    cfg = EstimatorConfig(j_max=j, threshold_scale=0.0)
    model, diag = estimate_nonlinear(data, K, filt, cfg)
    assert diag["j"] == j and diag["capped"]
    assert np.max(np.abs(model.theta - theta)) < 1e-6


def test_linear_identity_fixed_point(rng):
    J, j = 6, 2
    K = build_stiffness_matrix(KernelSpec("identity"), J)
    theta = _random_theta(rng, j)
    data = _exact_counts(theta, SYM6, J, 2.0**45)
    cfg = EstimatorConfig(mode="linear", s=1.0, j_max=j)
    model, diag = estimate_linear(data, K, SYM6, cfg)
    assert diag["mode"] == "linear" and diag["j"] == j
    assert np.max(np.abs(model.theta - theta)) < 1e-6


def test_nonlinear_on_log_kernel(K8):
    data = simulate_counts(fold_intensity(IntensitySpec("exp-sine"), K8), 1e6, 5)
    model, diag = estimate(data, K8, SYM6, EstimatorConfig())
    assert diag["j"] == 7 and diag["capped"]
    assert np.all(model.values() > 0)
    assert model.residual <= 1e-8
    assert 0 < diag["n_surviving_coeffs"] <= diag["n_coeffs"]
    # the moment residual is against the Galerkin target alpha
    Kj = wavelet_galerkin_matrix(K8, SYM6, diag["j"])
    beta = empirical_coeffs(data, SYM6).restrict(diag["j"])
    alpha = invert_thresholded(Kj, beta, level_thresholds(diag["j"], data.t, 1.0))
    assert np.max(np.abs(model.moments() - alpha)) <= 1e-8


def test_zero_data_is_infeasible(K6):
    data = CountData(6, np.zeros(64, int), 1e4)
    with pytest.raises(InfeasibleTarget) as info:
        estimate_nonlinear(data, K6, SYM6)
    assert not np.any(info.value.target)
    assert info.value.diagnostics["alpha_coarse"] == 0.0


def test_resolution_mismatch(K6):
    with pytest.raises(ValueError):
        estimate_nonlinear(CountData(4, np.ones(16, int), 1e4), K6, SYM6)


def test_model_round_trip(tmp_path, rng):
    model = information_projection(moments(np.exp(log_intensity(_random_theta(rng, 2), SYM6, 5)), SYM6, 2), SYM6, 5)
    back = ExpFamilyModel.from_dict(json.loads(json.dumps(model.to_dict())))
    assert np.array_equal(back.theta, model.theta)
    assert (back.j, back.J, back.filter, back.iterations, back.residual) == (model.j, model.J, model.filter, model.iterations, model.residual)
    path = model.write_grid_csv(tmp_path / "f.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "x,f_hat" and len(lines) == 33
    assert float(lines[1].split(",")[1]) == model.values()[0]


def test_model_validation():
    with pytest.raises(ValueError):
        ExpFamilyModel(2, np.zeros(3), HAAR, 4)
    with pytest.raises(ValueError):
        ExpFamilyModel(3, np.zeros(8), HAAR, 2)
