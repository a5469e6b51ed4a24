"""Confidence-adjusted action scoring.

The reciprocal score divides the ensemble mean by ``1 + risk`` where
``risk = lam * (alpha * sigma_m + beta * sigma_h)``. Two alternative shapes
(linear subtraction and exponential decay) are kept for comparison, along with
the risk-threshold abstention test and an adaptive skepticism rule.
"""

from __future__ import annotations

import csv
import enum
import io
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "ActionScore",
    "FilterParams",
    "FilterVariant",
    "adaptive_lambda",
    "batch_score",
    "check_proposition_1",
    "check_proposition_2",
    "export_filter_curves",
    "filter_curve_rows",
    "partial_derivatives",
    "score",
    "score_vector",
]

ADAPTIVE_EPS = 1e-6


class FilterVariant(str, enum.Enum):
    RECIPROCAL = "Reciprocal"
    LINEAR_SUBTRACTION = "LinearSubtraction"
    EXPONENTIAL_DECAY = "ExponentialDecay"


@dataclass(frozen=True)
class FilterParams:
    lam: float = 5.0
    alpha: float = 0.5
    beta: float = 0.5
    variant: FilterVariant = FilterVariant.RECIPROCAL
    adaptive: bool = False
    lambda_min: float = 0.0
    lambda_max: float = 10.0
    abstain_threshold: float = 0.6

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", FilterVariant(self.variant))
        if self.lam < 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        for name in ("alpha", "beta"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {value}")
        if self.adaptive and not self.lambda_min <= self.lam <= self.lambda_max:
            raise ValueError(
                f"adaptive filter needs lambda_min <= lambda <= lambda_max, "
                f"got {self.lambda_min} <= {self.lam} <= {self.lambda_max}"
            )

    def with_lambda(self, lam: float) -> "FilterParams":
        return replace(self, lam=lam)


@dataclass(frozen=True)
class ActionScore:
    j: float
    risk: float
    abstain: bool


def _apply(variant: FilterVariant, mu, risk):
    if variant is FilterVariant.RECIPROCAL:
        return mu / (1.0 + risk)
    if variant is FilterVariant.LINEAR_SUBTRACTION:
        return mu - risk
    return mu * np.exp(-risk)


def score(params: FilterParams, mu: float, sigma_m: float, sigma_h: float) -> ActionScore:
    if sigma_m < 0 or sigma_h < 0:
        raise ValueError(f"uncertainties must be non-negative, got {sigma_m}, {sigma_h}")
    risk = params.lam * (params.alpha * sigma_m + params.beta * sigma_h)
    j = float(_apply(params.variant, mu, risk))
    return ActionScore(j=j, risk=float(risk), abstain=risk > params.abstain_threshold)


def score_vector(
    params: FilterParams, mu: np.ndarray, sigma_m: np.ndarray, sigma_h: np.ndarray, lam=None
) -> tuple[np.ndarray, np.ndarray]:
    """Scores and risks for a vector of actions; ``lam`` overrides ``params.lam``."""
    lam = params.lam if lam is None else lam
    risk = lam * (params.alpha * sigma_m + params.beta * sigma_h)
    return _apply(params.variant, mu, risk), risk


def batch_score(variant: FilterVariant, mu, sigma_m, sigma_h, lam, alpha, beta) -> np.ndarray:
    """Filtered scores with every argument broadcast elementwise."""
    risk = np.asarray(lam) * (np.asarray(alpha) * sigma_m + np.asarray(beta) * sigma_h)
    return _apply(FilterVariant(variant), np.asarray(mu, dtype=float), risk)


def partial_derivatives(params: FilterParams, mu: float, sigma_m: float, sigma_h: float):
    """Analytic ``(dJ/dsigma_m, dJ/dsigma_h)`` of the reciprocal score."""
    denom = 1.0 + params.lam * (params.alpha * sigma_m + params.beta * sigma_h)
    base = -mu * params.lam / denom**2
    return base * params.alpha, base * params.beta


def check_proposition_1(params: FilterParams, mu: float, sigma_m: float, sigma_h: float) -> bool:
    """Non-negativity of the reciprocal score for ``mu >= 0``."""
    if mu < 0:
        raise ValueError("non-negativity is only claimed for mu >= 0")
    if params.variant is not FilterVariant.RECIPROCAL:
        raise ValueError("non-negativity is a property of the reciprocal variant")
    return score(params, mu, sigma_m, sigma_h).j >= 0.0


def check_proposition_2(
    params: FilterParams,
    mu: float,
    sigma_m: float = 0.0,
    sigma_h: float = 0.0,
    delta_m: float = 1.0,
    delta_h: float = 1.0,
    h: float = 1e-5,
    rtol: float = 1e-6,
) -> bool:
    """Strict decrease in each uncertainty and analytic/central-difference agreement.

    Checks ``J(sigma_m + delta_m, sigma_h) < J(sigma_m, sigma_h)`` and the
    same for ``sigma_h``, then compares both partial derivatives against
    central differences with step ``h``.
    """
    if mu <= 0 or params.lam <= 0 or params.alpha <= 0 or params.beta <= 0:
        raise ValueError("strict decrease needs mu, lambda, alpha, beta > 0")
    if params.variant is not FilterVariant.RECIPROCAL:
        raise ValueError("monotonicity check targets the reciprocal variant")
    if delta_m <= 0 or delta_h <= 0:
        raise ValueError("deltas must be positive")

    def j(sm, sh):
        return score(params, mu, sm, sh).j

    base = j(sigma_m, sigma_h)
    if not (j(sigma_m + delta_m, sigma_h) < base and j(sigma_m, sigma_h + delta_h) < base):
        return False
    d_m, d_h = partial_derivatives(params, mu, sigma_m, sigma_h)
    # central differences stay inside sigma >= 0 by stepping from max(sigma, h)
    sm, sh = max(sigma_m, h), max(sigma_h, h)
    fd_m = (j(sm + h, sigma_h) - j(sm - h, sigma_h)) / (2 * h)
    fd_h = (j(sigma_m, sh + h) - j(sigma_m, sh - h)) / (2 * h)
    d_m_at, _ = partial_derivatives(params, mu, sm, sigma_h)
    _, d_h_at = partial_derivatives(params, mu, sigma_m, sh)
    ok_m = abs(d_m_at - fd_m) <= rtol * abs(d_m_at)
    ok_h = abs(d_h_at - fd_h) <= rtol * abs(d_h_at)
    return bool(d_m < 0 and d_h < 0 and ok_m and ok_h)


def adaptive_lambda(
    params: FilterParams, sigma_m: float, sigma_h: float, baseline_sigma: float
) -> float:
    """Scale ``lambda`` by the relative excess of total uncertainty over its baseline.

    ``baseline_sigma`` is typically the trailing mean of the total uncertainty.
    The result is clamped to ``[lambda_min, lambda_max]``.
    """
    total = params.alpha * sigma_m + params.beta * sigma_h
    lam = params.lam * (1.0 + (total - baseline_sigma) / max(baseline_sigma, ADAPTIVE_EPS))
    return float(min(max(lam, params.lambda_min), params.lambda_max))


def filter_curve_rows(
    mus: Iterable[float], lambdas: Iterable[float], sigmas: Sequence[float]
) -> list[tuple[str, float, float, float, float]]:
    """``(variant, mu, lambda, sigma, j)`` over a grid, with sigma as the sole uncertainty."""
    sigmas = np.asarray(sigmas, dtype=float)
    if not np.all(np.isfinite(sigmas)):
        raise ValueError("sigma range must be finite")
    if np.any(np.diff(sigmas) < 0):
        raise ValueError("sigma range must be sorted")
    rows = []
    lambdas = list(lambdas)
    for variant in FilterVariant:
        for mu in mus:
            for lam in lambdas:
                params = FilterParams(lam=lam, alpha=1.0, beta=0.0, variant=variant)
                for sigma in sigmas:
                    rows.append((variant.value, float(mu), float(lam), float(sigma),
                                 score(params, mu, float(sigma), 0.0).j))
    return rows


def export_filter_curves(
    mus: Iterable[float], lambdas: Iterable[float], sigmas: Sequence[float], path=None
) -> str:
    """Write the filter comparison grid as CSV; returns the CSV text."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["variant", "mu", "lambda", "sigma", "j"])
    for variant, mu, lam, sigma, j in filter_curve_rows(mus, lambdas, sigmas):
        writer.writerow([variant, f"{mu:.6f}", f"{lam:.6f}", f"{sigma:.6f}", f"{j:.6f}"])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def sigma_grid(stop: float = 5.0, step: float = 0.05) -> np.ndarray:
    n = int(round(stop / step))
    return np.round(np.arange(n + 1) * step, 10)
