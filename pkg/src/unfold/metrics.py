"""Losses, theory constants, lemma checks and convergence-rate regression.

All integrals use grid quadrature ``2**-J * sum(...)``; with that rule the
wavelet basis is exactly orthonormal, so the coefficient-space identities of
the exponential family hold to roundoff.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import scipy.stats

from .errors import InfeasibleTarget, InvalidIntensity
from .estimator import EstimatorConfig, information_projection, log_intensity, moments
from .wavelets import SampledFunction, WaveletFilter, basis_matrix, get_filter, project, sup_norm_constant

__all__ = [
    "kl_divergence",
    "l2_error",
    "TheoryDiagnostics",
    "theory_diagnostics",
    "sampled_sup_ratio",
    "LemmaCheck",
    "LemmaReport",
    "kl_sandwich",
    "family_bounds",
    "pythagorean_check",
    "projection_stability",
    "lemma_suite",
    "RateTable",
    "RateFit",
    "rate_regression",
    "theoretical_exponent",
]

ROUNDOFF = 1e-9
PYTHAGOREAN_RTOL = 1e-6


# ---------------------------------------------------------------------------
# Losses
# ---------------------------------------------------------------------------


def _values(f):
    return f.values if isinstance(f, SampledFunction) else np.asarray(f, dtype=float)


def _same_grid(f, g):
    a, b = _values(f), _values(g)
    if a.shape != b.shape:
        raise ValueError(f"grid mismatch: {a.size} vs {b.size} samples")
    return a, b


def kl_divergence(f, f_hat) -> float:
    """``Delta(f; f_hat) = int f log(f/f_hat) - f + f_hat`` with ``0 log 0 = 0``."""
    f, f_hat = _same_grid(f, f_hat)
    if np.any(f < 0):
        raise InvalidIntensity("reference intensity f is negative somewhere")
    if np.any(f_hat <= 0):
        raise InvalidIntensity("estimate f_hat must be strictly positive")
    with np.errstate(divide="ignore", invalid="ignore"):
        logterm = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0) / f_hat), 0.0)
    return float(np.mean(logterm - f + f_hat))


def l2_error(f, f_hat) -> float:
    f, f_hat = _same_grid(f, f_hat)
    return float(math.sqrt(np.mean((f - f_hat) ** 2)))


# ---------------------------------------------------------------------------
# Theory constants
# ---------------------------------------------------------------------------


def theoretical_exponent(s: float, nu: float, d: int = 1) -> float:
    """Rate exponent ``-2s/(2s + 2nu + d)`` of the mean relative entropy in ``t``."""
    return -2.0 * s / (2.0 * s + 2.0 * nu + d)


def sampled_sup_ratio(filt: WaveletFilter, j: int, J: int, samples: int = 2000, seed: int = 0) -> float:
    """Monte Carlo lower estimate of ``sup ||v||_inf / ||v||_L2`` over ``V_j``.

    Cross-check for the exact value returned by :func:`sup_norm_constant`.
    """
    B = basis_matrix(get_filter(filt), j, J) * 2.0 ** (J / 2)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((samples, B.shape[0]))
    v = c @ B
    return float(np.max(np.max(np.abs(v), axis=1) / np.linalg.norm(c, axis=1)))


def _exp(x: float) -> float:
    # the bounds are meaningless long before they overflow; saturate instead of raising
    return math.exp(x) if x < 700.0 else math.inf


@dataclass(frozen=True)
class TheoryDiagnostics:
    j: int
    D: float
    gamma: float
    A: float
    M1: float
    eps: float
    rho: float
    delta: float
    t: float
    nu: float
    s: float

    @property
    def projection_guaranteed(self) -> bool:
        return self.eps <= 1.0

    def to_dict(self) -> dict:
        return {**asdict(self), "projection_guaranteed": self.projection_guaranteed}


def theory_diagnostics(f: SampledFunction, j: int, filt: WaveletFilter, nu: float, s: float, t: float) -> TheoryDiagnostics:
    """Approximation constants of ``g = log f`` at level ``j`` and the derived bounds (d = 1)."""
    filt = get_filter(filt)
    if np.any(f.values <= 0):
        raise InvalidIntensity("theory diagnostics need a strictly positive intensity")
    g = SampledFunction(f.grid, np.log(f.values))
    r = g.values - project(g, j, filt).values
    D = float(math.sqrt(np.mean(r**2)))
    gamma = float(np.max(np.abs(r)))
    A = sup_norm_constant(filt, j, f.J)
    M1 = _exp(float(np.max(np.abs(g.values))))
    eps = 2.0 * M1**2 * _exp(2.0 * gamma + 1.0) * D * A
    rho = (2.0 ** (j * (nu + 0.5)) / math.sqrt(t) + 2.0 ** (j * (nu + 1.5)) / t) ** 2 + 2.0 ** (-2.0 * j * s)
    delta = 4.0 * M1**2 * _exp(2.0 * eps + 2.0 * gamma + 2.0) * A**2 * rho
    return TheoryDiagnostics(j, D, gamma, A, M1, eps, rho, delta, float(t), float(nu), float(s))


# ---------------------------------------------------------------------------
# Lemma checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LemmaCheck:
    """One numerical instance of an identity or inequality.

    For inequalities ``slack = rhs - lhs`` (``lhs <= rhs`` wanted); for
    identities ``slack`` is the relative discrepancy.
    """

    name: str
    lhs: float
    rhs: float
    slack: float
    passed: bool
    kind: str = "inequality"
    note: str = ""


def _ineq(name, lhs, rhs, note=""):
    slack = rhs - lhs
    return LemmaCheck(name, float(lhs), float(rhs), float(slack), bool(slack >= -ROUNDOFF), "inequality", note)


def _identity(name, lhs, rhs, rtol=PYTHAGOREAN_RTOL):
    scale = max(abs(lhs), abs(rhs), 1e-300)
    rel = abs(lhs - rhs) / scale
    # identities between exact zeros are fine at the roundoff level
    ok = rel <= rtol or abs(lhs - rhs) <= ROUNDOFF * 1e-3
    return LemmaCheck(name, float(lhs), float(rhs), float(rel), bool(ok), "identity")


@dataclass
class LemmaReport:
    checks: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def extend(self, checks):
        self.checks.extend(checks)

    def failures(self) -> list:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> dict:
        return {
            "all_passed": self.all_passed,
            "checks": [asdict(c) for c in self.checks],
            "skipped": list(self.skipped),
        }


def kl_sandwich(f, h) -> list:
    """Two-sided bound of ``Delta(f; h)`` by ``1/2 e^{-+L} int f log(f/h)**2``, ``L = ||log(f/h)||_inf``."""
    f, h = _same_grid(f, h)
    if np.any(f <= 0) or np.any(h <= 0):
        raise InvalidIntensity("lemma checks need strictly positive intensities")
    r = np.log(f / h)
    L = float(np.max(np.abs(r)))
    quad = float(np.mean(f * r**2))
    delta = kl_divergence(f, h)
    return [
        _ineq("kl sandwich lower", 0.5 * math.exp(-L) * quad, delta),
        _ineq("kl sandwich upper", delta, 0.5 * math.exp(L) * quad),
    ]


def family_bounds(theta0, theta, filt: WaveletFilter, J: int, literal: bool = False) -> list:
    """Exponential-family bounds between ``f_{j,theta0}`` and ``f_{j,theta}``.

    The exponent uses ``A_j ||theta0 - theta||_2``, which is what the first
    inequality delivers. ``literal=True`` swaps in the sup-norm of the
    parameter difference; that variant is reported for information only and
    its checks are never counted as failures.
    """
    filt = get_filter(filt)
    theta0 = np.asarray(theta0, dtype=float)
    theta = np.asarray(theta, dtype=float)
    j = theta0.size.bit_length() - 1
    A = sup_norm_constant(filt, j, J)
    g0 = log_intensity(theta0, filt, J)
    g1 = log_intensity(theta, filt, J)
    b = math.exp(float(np.max(np.abs(g0))))
    diff = theta0 - theta
    n2 = float(np.linalg.norm(diff))
    expo = A * (float(np.max(np.abs(diff))) if literal else n2)
    delta = kl_divergence(np.exp(g0), np.exp(g1))
    checks = [
        _ineq("family sup-log", float(np.max(np.abs(g0 - g1))), A * n2),
        _ineq("family lower", math.exp(-expo) * n2**2 / (2.0 * b), delta),
        _ineq("family upper", delta, 0.5 * b * math.exp(expo) * n2**2),
    ]
    if literal:
        checks = [
            LemmaCheck(c.name + " (sup-norm exponent)", c.lhs, c.rhs, c.slack, True, "informational",
                       "violation" if c.slack < -ROUNDOFF else "")
            for c in checks[1:]
        ]
    return checks


def pythagorean_check(f, theta_alpha, theta, filt: WaveletFilter) -> LemmaCheck:
    """``Delta(f; f_theta) = Delta(f; f_theta(alpha)) + Delta(f_theta(alpha); f_theta)``.

    ``theta_alpha`` must match the moments of ``f`` at its level.
    """
    f = _values(f)
    J = int(np.log2(f.size))
    fa = np.exp(log_intensity(np.asarray(theta_alpha, dtype=float), filt, J))
    ft = np.exp(log_intensity(np.asarray(theta, dtype=float), filt, J))
    lhs = kl_divergence(f, ft)
    rhs = kl_divergence(f, fa) + kl_divergence(fa, ft)
    return _identity("pythagorean", lhs, rhs)


def projection_stability(theta0, alpha, filt: WaveletFilter, J: int, cfg: EstimatorConfig | None = None):
    """Stability of the projection under a moment perturbation.

    Returns ``(checks, None)`` when the hypothesis
    ``||alpha - alpha0||_2 <= 1/(2 e b A_j)`` holds, else ``([], reason)``.
    """
    filt = get_filter(filt)
    theta0 = np.asarray(theta0, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    j = theta0.size.bit_length() - 1
    g0 = log_intensity(theta0, filt, J)
    f0 = np.exp(g0)
    alpha0 = moments(f0, filt, j)
    A = sup_norm_constant(filt, j, J)
    b = math.exp(float(np.max(np.abs(g0))))
    dist = float(np.linalg.norm(alpha - alpha0))
    bound = 1.0 / (2.0 * math.e * b * A)
    if dist > bound:
        return [], f"hypothesis not met: ||alpha - alpha0||_2 = {dist:.3g} > {bound:.3g}"
    cfg = cfg or EstimatorConfig(tol=1e-12)
    model = information_projection(alpha, filt, J, cfg)
    g1 = model.log_values()
    checks = [
        _ineq("stability theta", float(np.linalg.norm(model.theta - theta0)), 2.0 * math.e * b * dist),
        _ineq("stability sup-log", float(np.max(np.abs(g0 - g1))), 2.0 * math.e * b * A * dist),
        _ineq("stability kl", kl_divergence(f0, np.exp(g1)), 2.0 * math.e * b * dist**2),
    ]
    return checks, None


def lemma_suite(f: SampledFunction, models, filt: WaveletFilter | None = None, cfg: EstimatorConfig | None = None) -> LemmaReport:
    """Run every lemma check for a positive ``f`` against a list of exponential-family models.

    Per model at level ``j``: the projection ``theta(alpha)`` of ``f``'s own
    moments is computed, then the relative-entropy sandwich (``f`` vs the
    model), the Pythagorean identity, the exponential-family bounds between
    ``theta(alpha)`` and the model, and projection stability with
    ``theta0 = theta(alpha)`` and the model's moments as the perturbed target
    (when its hypothesis holds).
    """
    values = _values(f)
    if np.any(values <= 0):
        raise InvalidIntensity("lemma checks need a strictly positive intensity")
    report = LemmaReport()
    cfg = cfg or EstimatorConfig(tol=1e-12)
    for i, model in enumerate(models):
        mfilt = get_filter(filt) if filt is not None else model.filter
        fm = model.values()
        report.extend(kl_sandwich(values, fm))
        alpha = moments(values, mfilt, model.j)
        try:
            proj = information_projection(alpha, mfilt, model.J, cfg)
        except InfeasibleTarget as exc:
            report.skipped.append(f"model {i}: projection of f failed ({exc})")
            continue
        report.checks.append(pythagorean_check(values, proj.theta, model.theta, mfilt))
        report.extend(family_bounds(proj.theta, model.theta, mfilt, model.J))
        report.extend(family_bounds(proj.theta, model.theta, mfilt, model.J, literal=True))
        checks, reason = projection_stability(proj.theta, model.moments(), mfilt, model.J, cfg)
        report.extend(checks)
        if reason:
            report.skipped.append(f"model {i}: projection stability {reason}")
    return report


# ---------------------------------------------------------------------------
# Rates
# ---------------------------------------------------------------------------


@dataclass
class RateTable:
    """Long-format loss table: one row per ``(t, replicate, loss_kind)``."""

    rows: list = field(default_factory=list)

    def add(self, t: float, replicate: int, loss_kind: str, value: float):
        self.rows.append((float(t), int(replicate), str(loss_kind), float(value)))

    def values(self, loss_kind: str = "kl") -> dict:
        out = {}
        for t, _, kind, v in self.rows:
            if kind == loss_kind:
                out.setdefault(t, []).append(v)
        return dict(sorted(out.items()))

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["t", "replicate", "loss_kind", "value"])
            writer.writerows((repr(t), r, k, repr(v)) for t, r, k, v in self.rows)
        return path

    @classmethod
    def read_csv(cls, path) -> "RateTable":
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            return cls([(float(r["t"]), int(r["replicate"]), r["loss_kind"], float(r["value"])) for r in reader])


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    t: tuple
    mean_loss: tuple
    slope_stderr: float
    residual_se: float

    def to_dict(self) -> dict:
        return asdict(self)


def rate_regression(table: RateTable, loss_kind: str = "kl") -> RateFit:
    """OLS of ``log(mean loss)`` on ``log t`` (log of the across-replicate mean)."""
    groups = table.values(loss_kind)
    if len(groups) < 2:
        raise ValueError(f"rate regression needs at least two distinct t values, got {len(groups)}")
    t = np.array(list(groups))
    means = np.array([math.fsum(v) / len(v) for v in groups.values()])
    if np.any(means <= 0):
        raise ValueError("mean losses must be positive for a log-log fit")
    x, y = np.log(t), np.log(means)
    fit = scipy.stats.linregress(x, y)
    resid = y - (fit.intercept + fit.slope * x)
    dof = len(x) - 2
    residual_se = float(math.sqrt(np.sum(resid**2) / dof)) if dof > 0 else float("nan")
    return RateFit(float(fit.slope), float(fit.intercept), tuple(map(float, t)), tuple(map(float, means)), float(fit.stderr), residual_se)
