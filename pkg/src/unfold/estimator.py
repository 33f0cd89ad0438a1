"""Galerkin information-projection estimators of a Poisson intensity.

Pipeline: empirical wavelet coefficients of the binned counts, level-dependent
soft thresholding (nonlinear mode only), Galerkin inversion ``K_j alpha = beta``,
then moment matching within the exponential family
``f_theta = exp(sum_{|lambda|<j} theta_lambda psi_lambda)``.

All integrals against ``f_theta`` use the grid quadrature of the data
resolution ``J``; with that rule the moments are a forward DWT and the Hessian
is the two-sided DWT of ``diag(f_theta)``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.linalg

from .errors import ExponentOverflow, InfeasibleTarget, SingularHessian
from .operators import GalerkinMatrix, StiffnessMatrix, wavelet_galerkin_matrix
from .simulate import CountData
from .wavelets import DyadicGrid, SampledFunction, WaveletCoefficients, WaveletFilter, fwt, get_filter, iwt

logger = logging.getLogger(__name__)

__all__ = [
    "EstimatorConfig",
    "ExpFamilyModel",
    "empirical_coeffs",
    "soft_threshold",
    "threshold_schedule",
    "level_thresholds",
    "cutoff_level",
    "linear_level",
    "invert_thresholded",
    "moments",
    "hessian",
    "information_projection",
    "estimate_nonlinear",
    "estimate_linear",
    "estimate",
]

_TINY = 1e-300


@dataclass(frozen=True)
class EstimatorConfig:
    """Estimator settings.

    ``threshold_scale`` multiplies the threshold schedule (0 disables
    thresholding); ``clip`` bounds ``|log f_theta|`` on the grid during Newton
    iterations.
    """

    mode: str = "nonlinear"
    nu: float = 1.0
    s: float | None = None
    j_max: int = 10
    tol: float = 1e-8
    max_iter: int = 100
    damping_floor: float = 2.0**-20
    clip: float = 50.0
    threshold_scale: float = 1.0

    def __post_init__(self):
        if self.mode not in ("nonlinear", "linear"):
            raise ValueError(f"mode must be 'nonlinear' or 'linear', got {self.mode!r}")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not 0 < self.damping_floor < 1:
            raise ValueError("damping_floor must lie in (0, 1)")
        if self.j_max < 0:
            raise ValueError("j_max must be nonnegative")
        if self.threshold_scale < 0:
            raise ValueError("threshold_scale must be nonnegative")
        if self.mode == "linear" and (self.s is None or not self.s > 0):
            raise ValueError("linear mode needs the smoothness s > 0")


@dataclass(frozen=True, eq=False)
class ExpFamilyModel:
    """``f_{j,theta} = exp(sum_{|lambda|<j} theta_lambda psi_lambda)`` evaluated on the ``J`` grid."""

    j: int
    theta: np.ndarray
    filter: WaveletFilter
    J: int
    iterations: int = 0
    residual: float = float("nan")
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.shape != (1 << self.j,):
            raise ValueError(f"theta must have {1 << self.j} entries for j={self.j}")
        if not 0 <= self.j <= self.J:
            raise ValueError(f"model level j={self.j} exceeds grid resolution J={self.J}")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def log_values(self) -> np.ndarray:
        return log_intensity(self.theta, self.filter, self.J)

    def values(self) -> np.ndarray:
        return np.exp(self.log_values())

    def evaluate(self) -> SampledFunction:
        return SampledFunction(DyadicGrid(self.J), self.values())

    def moments(self) -> np.ndarray:
        return moments(self.values(), self.filter, self.j)

    def to_dict(self) -> dict:
        return {
            "j": self.j,
            "J": self.J,
            "filter": self.filter.name,
            "theta": [float(v) for v in self.theta],
            "diagnostics": {"iterations": self.iterations, "residual": self.residual, **self.diagnostics},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExpFamilyModel":
        diag = dict(d.get("diagnostics", {}))
        iterations = int(diag.pop("iterations", 0))
        residual = float(diag.pop("residual", float("nan")))
        return cls(int(d["j"]), np.asarray(d["theta"], dtype=float), get_filter(d["filter"]), int(d["J"]), iterations, residual, diag)

    def write_grid_csv(self, path) -> Path:
        path = Path(path)
        grid = DyadicGrid(self.J)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["x", "f_hat"])
            writer.writerows((repr(float(x)), repr(float(v))) for x, v in zip(grid.points, self.values()))
        return path


def log_intensity(theta: np.ndarray, filt: WaveletFilter, J: int) -> np.ndarray:
    padded = np.zeros(1 << J)
    padded[: theta.size] = theta
    return iwt(padded, filt) * 2.0 ** (J / 2)


def moments(f_values: np.ndarray, filt: WaveletFilter, j: int) -> np.ndarray:
    """``<f, psi_lambda>`` for ``|lambda| < j`` under grid quadrature."""
    J = int(np.log2(f_values.size))
    return fwt(f_values * 2.0 ** (-J / 2), filt)[: 1 << j]


def hessian(f_values: np.ndarray, filt: WaveletFilter, j: int) -> np.ndarray:
    """``int f psi_lambda psi_lambda'`` for ``|lambda|, |lambda'| < j``.

    Computed as the two-dimensional DWT of ``diag(f)``.
    """
    w = fwt(fwt(np.diag(f_values), filt, axis=1), filt, axis=0)
    size = 1 << j
    block = w[:size, :size]
    return 0.5 * (block + block.T)


# ---------------------------------------------------------------------------
# Data side
# ---------------------------------------------------------------------------


def empirical_coeffs(data: CountData, filt: WaveletFilter) -> WaveletCoefficients:
    """``(1/t) int psi_lambda dG`` for every ``lambda``, exact for binned events."""
    if not data.t > 0:
        raise ValueError("observation time t must be positive")
    c = data.counts * (2.0 ** (data.J / 2) / data.t)
    return WaveletCoefficients(data.J, fwt(c, filt), 0, filt.name)


def soft_threshold(x, eps):
    """``sign(x) max(|x| - eps, 0)``."""
    x = np.asarray(x, dtype=float)
    out = np.sign(x) * np.maximum(np.abs(x) - eps, 0.0)
    return float(out) if out.ndim == 0 else out


def threshold_schedule(lam, t: float, nu: float) -> float:
    """``2**(nu max(|lambda|, 0)) t**-1/2 sqrt|log t|``; ``lam`` is ``(j, k)`` or a level."""
    if not t > 0:
        raise ValueError("t must be positive")
    level = lam[0] if isinstance(lam, tuple) else lam
    return 2.0 ** (nu * max(level, 0)) * math.sqrt(abs(math.log(t)) / t)


def level_thresholds(j: int, t: float, nu: float) -> np.ndarray:
    """Threshold for every slot of the ``|lambda| < j`` block (coarse slot at level 0)."""
    levels = np.zeros(1 << j)
    for level in range(1, j):
        levels[1 << level : 2 << level] = level
    return 2.0 ** (nu * levels) * math.sqrt(abs(math.log(t)) / t)


def cutoff_level(t: float, nu: float, j_cap: int) -> int:
    """Smallest ``j`` with ``2**-j <= t**(-1/(2 nu))``, capped at ``j_cap``."""
    if not t > 1:
        raise ValueError("cutoff level needs t > 1")
    raw = math.log2(t) / (2.0 * nu)
    return min(max(math.ceil(raw - 1e-9), 0), j_cap)


def linear_level(t: float, s: float, nu: float, j_cap: int, d: int = 1) -> int:
    """``floor(log2(t) / (2s + 2nu + d))``, capped at ``j_cap``."""
    if not t > 1:
        raise ValueError("linear level needs t > 1")
    raw = math.log2(t) / (2.0 * s + 2.0 * nu + d)
    return min(max(math.floor(raw + 1e-9), 0), j_cap)


def invert_thresholded(Kj: GalerkinMatrix, beta, thresholds) -> np.ndarray:
    """Soft-threshold ``beta`` slotwise, then solve ``K_j alpha = T(beta)``."""
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (Kj.size,):
        raise ValueError(f"coefficient vector has {beta.size} entries, Galerkin matrix has {Kj.size}")
    kept = soft_threshold(beta, np.broadcast_to(np.asarray(thresholds, dtype=float), beta.shape))
    if not np.any(kept):
        return np.zeros_like(beta)
    return Kj.solve(kept)


# ---------------------------------------------------------------------------
# Information projection
# ---------------------------------------------------------------------------


def information_projection(alpha, filt: WaveletFilter, J: int, cfg: EstimatorConfig | None = None) -> ExpFamilyModel:
    """Solve ``<f_{j,theta}, psi_lambda> = alpha_lambda`` for ``theta`` by damped Newton.

    Each step is ``theta + gamma H^{-1} S`` with ``S = alpha - moments(theta)``;
    ``gamma`` is halved from 1 until ``||S||_2`` decreases.
    """
    cfg = cfg or EstimatorConfig()
    filt = get_filter(filt)
    alpha = np.asarray(alpha, dtype=float)
    size = alpha.size
    j = size.bit_length() - 1
    if size < 1 or (1 << j) != size or j > J:
        raise ValueError(f"target must have 2**j entries with j <= J={J}, got {size}")
    if not np.all(np.isfinite(alpha)):
        raise InfeasibleTarget("moment target is not finite", target=alpha)
    if not alpha[0] > 0:
        raise InfeasibleTarget(
            f"alpha_coarse = {alpha[0]:.6g}: the total mass must be positive for an exponential-family fit",
            target=alpha,
        )

    def evaluate(theta):
        g = log_intensity(theta, filt, J)
        peak = float(np.max(np.abs(g)))
        if peak > cfg.clip:
            raise ExponentOverflow(f"|log f_theta| reached {peak:.3g} > clip {cfg.clip}")
        f = np.exp(g)
        return f, alpha - moments(f, filt, j)

    theta = np.zeros(size)
    # phi_{0,0} is identically one, so exp(theta_coarse) is the total mass
    theta[0] = math.log(max(alpha[0], _TINY))
    f, S = evaluate(theta)
    norm = float(np.linalg.norm(S))
    iterations = 0
    while float(np.max(np.abs(S))) > cfg.tol:
        if iterations >= cfg.max_iter:
            raise InfeasibleTarget(
                f"Newton iteration did not converge in {cfg.max_iter} steps (residual {np.max(np.abs(S)):.3e})",
                residual=float(np.max(np.abs(S))),
                target=alpha,
            )
        H = hessian(f, filt, j)
        try:
            factor = scipy.linalg.cho_factor(H, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise SingularHessian(f"Hessian not positive definite at iteration {iterations}") from exc
        step = scipy.linalg.cho_solve(factor, S)
        gamma = 1.0
        overflowed = True
        while True:
            trial = theta + gamma * step
            try:
                f_new, S_new = evaluate(trial)
                overflowed = False
                new_norm = float(np.linalg.norm(S_new))
                if new_norm < norm:
                    break
            except ExponentOverflow:
                pass
            gamma *= 0.5
            if gamma < cfg.damping_floor:
                residual = float(np.max(np.abs(S)))
                if overflowed:
                    raise ExponentOverflow(
                        f"every damped step left the clip range |log f| <= {cfg.clip} (residual {residual:.3e})"
                    )
                raise InfeasibleTarget(
                    f"damping floor {cfg.damping_floor:.3g} reached without decreasing the residual {residual:.3e}",
                    residual=residual,
                    target=alpha,
                )
        theta, f, S, norm = trial, f_new, S_new, new_norm
        iterations += 1
    return ExpFamilyModel(j, theta, filt, J, iterations, float(np.max(np.abs(S))))


# ---------------------------------------------------------------------------
# Full pipelines
# ---------------------------------------------------------------------------


def _check_inputs(data: CountData, K: StiffnessMatrix, cfg: EstimatorConfig):
    if data.J != K.J:
        raise ValueError(f"resolution mismatch: counts J={data.J}, operator J={K.J}")
    if not data.t > 1:
        raise ValueError(f"observation time must exceed 1, got t={data.t}")


def _galerkin(K, filt, j, galerkin):
    if galerkin is not None and galerkin.j == j:
        return galerkin
    return wavelet_galerkin_matrix(K, filt, j)


def _project(alpha, filt, J, cfg, diagnostics):
    try:
        model = information_projection(alpha, filt, J, cfg)
    except InfeasibleTarget as exc:
        exc.target = alpha
        exc.diagnostics = diagnostics
        raise
    diagnostics.update(iterations=model.iterations, residual=model.residual)
    return replace(model, diagnostics={k: v for k, v in diagnostics.items() if k not in ("iterations", "residual")})


def estimate_nonlinear(data: CountData, K: StiffnessMatrix, filt: WaveletFilter, cfg: EstimatorConfig | None = None, galerkin: GalerkinMatrix | None = None):
    """Thresholded Galerkin information projection; returns ``(model, diagnostics)``."""
    cfg = cfg or EstimatorConfig()
    filt = get_filter(filt)
    _check_inputs(data, K, cfg)
    cap = min(cfg.j_max, data.J - 1)
    j_raw = cutoff_level(data.t, cfg.nu, 10**6)
    j = min(j_raw, cap)
    beta = empirical_coeffs(data, filt).restrict(j)
    thresholds = cfg.threshold_scale * level_thresholds(j, data.t, cfg.nu)
    kept = soft_threshold(beta, thresholds)
    Kj = _galerkin(K, filt, j, galerkin)
    alpha = Kj.solve(kept) if np.any(kept) else np.zeros_like(kept)
    diagnostics = {
        "mode": "nonlinear",
        "j": j,
        "j_uncapped": j_raw,
        "capped": j_raw > cap,
        "n_coeffs": int(beta.size),
        "n_surviving_coeffs": int(np.count_nonzero(kept)),
        "alpha_coarse": float(alpha[0]),
    }
    if diagnostics["capped"]:
        logger.info("cutoff level %d capped to %d", j_raw, j)
    model = _project(alpha, filt, data.J, cfg, diagnostics)
    return model, diagnostics


def estimate_linear(data: CountData, K: StiffnessMatrix, filt: WaveletFilter, cfg: EstimatorConfig, galerkin: GalerkinMatrix | None = None):
    """Nonadaptive Galerkin information projection at ``2**-j = t**(-1/(2s+2nu+1))``."""
    filt = get_filter(filt)
    if cfg.s is None:
        raise ValueError("linear estimation needs the smoothness s")
    _check_inputs(data, K, cfg)
    cap = min(cfg.j_max, data.J - 1)
    j_raw = linear_level(data.t, cfg.s, cfg.nu, 10**6)
    j = min(j_raw, cap)
    beta = empirical_coeffs(data, filt).restrict(j)
    Kj = _galerkin(K, filt, j, galerkin)
    alpha = Kj.solve(beta)
    diagnostics = {
        "mode": "linear",
        "j": j,
        "j_uncapped": j_raw,
        "capped": j_raw > cap,
        "n_coeffs": int(beta.size),
        "n_surviving_coeffs": int(np.count_nonzero(beta)),
        "alpha_coarse": float(alpha[0]),
    }
    model = _project(alpha, filt, data.J, cfg, diagnostics)
    return model, diagnostics


def estimate(data: CountData, K: StiffnessMatrix, filt: WaveletFilter, cfg: EstimatorConfig, galerkin: GalerkinMatrix | None = None):
    """Dispatch on ``cfg.mode``."""
    if cfg.mode == "linear":
        return estimate_linear(data, K, filt, cfg, galerkin)
    return estimate_nonlinear(data, K, filt, cfg, galerkin)
