"""Alignment metrics, multi-seed aggregation and significance tests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Mapping, Sequence

import numpy as np

from .filters import FilterParams, FilterVariant, score_vector

__all__ = [
    "EpisodeMetrics",
    "RunSummary",
    "SampleStats",
    "TTestResult",
    "aggregate",
    "betainc",
    "pooled_t_test",
    "reduction_percent",
    "sign_preservation_radius",
    "student_t_sf",
    "summarize_run",
    "welch_t_test",
]

FINAL_WINDOW = 100
WINDOW_METRICS = ("true_return", "observed_return", "trap_visits", "goal_reached", "abstentions")


@dataclass(frozen=True)
class EpisodeMetrics:
    episode: int
    true_return: float
    observed_return: float
    trap_visits: int
    abstentions: int
    goal_reached: bool
    mean_sigma_m: float
    mean_sigma_h: float
    epsilon: float

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class RunSummary:
    seed: int
    variant: str
    episodes: list[EpisodeMetrics]
    final_window: dict[str, dict[str, float]] = field(default_factory=dict)
    alignment_gap: float = float("nan")

    def series(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.episodes], dtype=float)

    def window_mean(self, name: str) -> float:
        return self.final_window[name]["mean"]


def _mean_std(values: np.ndarray) -> dict[str, float]:
    if values.size == 0:
        return {"mean": float("nan"), "std": float("nan")}
    std = float(values.std(ddof=1)) if values.size > 1 else 0.0
    return {"mean": float(values.mean()), "std": std}


def summarize_run(
    seed: int, variant: str, episodes: Sequence[EpisodeMetrics], window: int = FINAL_WINDOW
) -> RunSummary:
    """Attach final-window aggregates (last ``window`` episodes) to a run."""
    run = RunSummary(seed=seed, variant=variant, episodes=list(episodes))
    tail = run.episodes[-window:] if window > 0 else []
    for name in WINDOW_METRICS:
        run.final_window[name] = _mean_std(np.array([getattr(e, name) for e in tail], dtype=float))
    if tail:
        run.alignment_gap = abs(
            run.final_window["observed_return"]["mean"] - run.final_window["true_return"]["mean"]
        )
    return run


def aggregate(runs: Iterable[RunSummary]) -> dict[str, dict[str, dict[str, float]]]:
    """Across-seed mean and sample std of each final-window metric, per variant.

    Each run contributes its final-window mean. Needs at least two runs per
    variant.
    """
    grouped: dict[str, list[RunSummary]] = {}
    for run in runs:
        grouped.setdefault(run.variant, []).append(run)
    out: dict[str, dict[str, dict[str, float]]] = {}
    for variant, group in grouped.items():
        if len(group) < 2:
            raise ValueError(f"variant {variant!r} has {len(group)} run(s); need >= 2 for std")
        stats = {}
        for name in WINDOW_METRICS:
            stats[name] = _mean_std(np.array([r.window_mean(name) for r in group]))
        stats["alignment_gap"] = _mean_std(np.array([r.alignment_gap for r in group]))
        out[variant] = stats
    return out


@dataclass(frozen=True)
class SampleStats:
    mean: float
    std: float
    n: int

    @classmethod
    def of(cls, values: Sequence[float]) -> "SampleStats":
        arr = np.asarray(values, dtype=float)
        std = float(arr.std(ddof=1)) if arr.size > 1 else float("nan")
        return cls(float(arr.mean()) if arr.size else float("nan"), std, int(arr.size))


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: float
    p: float
    significant_at_05: bool

    def as_dict(self) -> dict:
        return asdict(self)


# Regularized incomplete beta, continued fraction evaluated with the modified
# Lentz method. Converges to ~1e-15 relative for the arguments used here.
_BETACF_EPS = 1e-15
_BETACF_TINY = 1e-300
_BETACF_MAXITER = 500


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _BETACF_TINY:
        d = _BETACF_TINY
    d = 1.0 / d
    h = d
    for m in range(1, _BETACF_MAXITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _BETACF_TINY if abs(d) < _BETACF_TINY else d
        c = 1.0 + aa / c
        c = _BETACF_TINY if abs(c) < _BETACF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _BETACF_TINY if abs(d) < _BETACF_TINY else d
        c = 1.0 + aa / c
        c = _BETACF_TINY if abs(c) < _BETACF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _BETACF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta did not converge for a={a}, b={b}, x={x}")


def betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function ``I_x(a, b)``."""
    if a <= 0 or b <= 0:
        raise ValueError("a and b must be positive")
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    log_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(log_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_sf(t: float, df: float) -> float:
    """Upper tail ``P(T > t)`` of Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    tail = 0.5 * betainc(df / 2.0, 0.5, df / (df + t * t))
    return tail if t > 0 else 1.0 - tail


def _two_sided(t: float, df: float, mean_diff: float, se: float) -> TTestResult:
    if se == 0.0:
        if mean_diff == 0.0:
            t, p = 0.0, 1.0
        else:
            t, p = math.copysign(math.inf, mean_diff), 0.0
    else:
        p = min(1.0, 2.0 * student_t_sf(abs(t), df))
    return TTestResult(t=t, df=df, p=p, significant_at_05=p < 0.05)


def _as_stats(sample) -> SampleStats:
    if isinstance(sample, SampleStats):
        return sample
    return SampleStats.of(sample)


def welch_t_test(sample_a, sample_b) -> TTestResult:
    """Unequal-variance two-sample t-test.

    Samples are ``SampleStats`` summaries or raw sequences.
    """
    a, b = _as_stats(sample_a), _as_stats(sample_b)
    if a.n < 2 or b.n < 2:
        raise ValueError("each sample needs n >= 2")
    if a.std < 0 or b.std < 0:
        raise ValueError("standard deviations must be non-negative")
    va, vb = a.std**2 / a.n, b.std**2 / b.n
    se = math.sqrt(va + vb)
    diff = a.mean - b.mean
    if se == 0.0:
        return _two_sided(0.0, float(a.n + b.n - 2), diff, 0.0)
    df = (va + vb) ** 2 / (va**2 / (a.n - 1) + vb**2 / (b.n - 1))
    return _two_sided(diff / se, df, diff, se)


def pooled_t_test(sample_a, sample_b) -> TTestResult:
    """Equal-variance (Student) two-sample t-test."""
    a, b = _as_stats(sample_a), _as_stats(sample_b)
    if a.n < 2 or b.n < 2:
        raise ValueError("each sample needs n >= 2")
    df = a.n + b.n - 2
    pooled = ((a.n - 1) * a.std**2 + (b.n - 1) * b.std**2) / df
    se = math.sqrt(pooled * (1.0 / a.n + 1.0 / b.n))
    diff = a.mean - b.mean
    return _two_sided(diff / se if se else 0.0, float(df), diff, se)


def reduction_percent(baseline: float, treated: float) -> float:
    if baseline <= 0:
        raise ValueError(f"baseline must be positive, got {baseline}")
    return 100.0 * (baseline - treated) / baseline


def _inverse_shift(variant: FilterVariant, target: float, mu: float, risk: float) -> float:
    """Amount to add to ``mu`` so the filtered score reaches ``target``."""
    if variant is FilterVariant.RECIPROCAL:
        return target * (1.0 + risk) - mu
    if variant is FilterVariant.LINEAR_SUBTRACTION:
        return target + risk - mu
    return target * math.exp(risk) - mu


def sign_preservation_radius(ensemble, sigma_h_store, params: FilterParams, s: int) -> float:
    """Smallest increase of the runner-up's mean value that makes it tie the best action.

    Scores use the ensemble mean and spread at ``s`` and the stored annotator
    disagreement; uncertainties are held fixed while the mean is shifted.
    """
    mu, sigma_m = ensemble.state_stats(s)
    sigma_h = np.asarray(sigma_h_store.row(s) if hasattr(sigma_h_store, "row") else sigma_h_store[s])
    j, risk = score_vector(params, mu, sigma_m, sigma_h)
    order = np.argsort(-j, kind="stable")
    best, runner = int(order[0]), int(order[1])
    if j[best] == j[runner]:
        return 0.0
    return max(0.0, _inverse_shift(params.variant, float(j[best]), float(mu[runner]), float(risk[runner])))


def final_window_values(runs: Sequence[RunSummary], name: str) -> list[float]:
    return [r.window_mean(name) for r in runs]


def by_variant(runs: Iterable[RunSummary]) -> Mapping[str, list[RunSummary]]:
    grouped: dict[str, list[RunSummary]] = {}
    for run in runs:
        grouped.setdefault(run.variant, []).append(run)
    return grouped
