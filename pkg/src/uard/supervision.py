"""Synthetic annotators and the human-disagreement signal.

Each annotator reports the observed reward plus a trap-conditioned bias and
Gaussian noise; extra supervisory noise can be layered on top. Disagreement
across annotators (sample standard deviation) is tracked per state-action pair
as an exponential moving average.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "AnnotatorKind",
    "AnnotatorProfile",
    "FeedbackSample",
    "NoiseSpec",
    "SigmaHStore",
    "annotate",
    "default_profiles",
    "running_sigma_h",
]

# Stochastic annotator's trap noise, calibrated so the mean trap-cell sample
# std of the three default annotators is ~1.247 (see tests/test_supervision.py).
STOCHASTIC_TRAP_NOISE = 0.93


class AnnotatorKind(str, enum.Enum):
    CONSERVATIVE = "Conservative"
    MILDLY_TEMPTED = "MildlyTempted"
    STOCHASTIC = "Stochastic"


@dataclass(frozen=True)
class AnnotatorProfile:
    kind: AnnotatorKind
    trap_bias: float = 0.0
    noise_std: float = 0.05
    trap_noise_std: float = 0.05

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", AnnotatorKind(self.kind))
        if self.noise_std < 0 or self.trap_noise_std < 0:
            raise ValueError(f"annotator noise must be non-negative: {self}")


def default_profiles() -> tuple[AnnotatorProfile, ...]:
    return (
        AnnotatorProfile(AnnotatorKind.CONSERVATIVE, 0.0, 0.05, 0.05),
        AnnotatorProfile(AnnotatorKind.MILDLY_TEMPTED, 2.0, 0.05, 0.05),
        AnnotatorProfile(AnnotatorKind.STOCHASTIC, 0.0, 0.1, STOCHASTIC_TRAP_NOISE),
    )


@dataclass(frozen=True)
class NoiseSpec:
    """Supervisory noise injected into annotations.

    ``kind`` selects the noise model:

    - ``relative``: each annotator gets its own draw with std ``level * |reward|``.
    - ``absolute``: each annotator gets its own draw with std ``std_scale``,
      which defaults to ``level * goal_reward``.
    - ``shared``: one ``std_scale`` draw added to every annotator alike.
    """

    level: float = 0.0
    std_scale: float | None = None
    goal_reward: float = 10.0
    kind: str = "relative"

    def __post_init__(self) -> None:
        if not 0.0 <= self.level <= 1.0:
            raise ValueError(f"noise level must be in [0, 1], got {self.level}")
        if self.kind not in ("relative", "absolute", "shared"):
            raise ValueError(f"noise kind must be relative, absolute or shared, got {self.kind!r}")
        if self.std_scale is None:
            object.__setattr__(self, "std_scale", self.level * self.goal_reward)
        if self.std_scale < 0:
            raise ValueError(f"std_scale must be >= 0, got {self.std_scale}")


@dataclass(frozen=True)
class FeedbackSample:
    annotations: np.ndarray
    mean_h: float
    sigma_h: float


class AnnotatorPanel:
    """Vectorised form of a profile list, used by the training loop."""

    def __init__(self, profiles: Sequence[AnnotatorProfile], noise: NoiseSpec | None = None):
        if len(profiles) < 2:
            raise ValueError(f"need at least 2 annotators, got {len(profiles)}")
        self.profiles = tuple(profiles)
        self.noise = noise or NoiseSpec()
        self.bias = np.array([p.trap_bias for p in profiles])
        self.std = np.array([p.noise_std for p in profiles])
        self.trap_std = np.array([p.trap_noise_std for p in profiles])

    @property
    def k(self) -> int:
        return len(self.profiles)

    def from_normals(self, reward: float, trap_hit: bool, z_own, z_noise) -> np.ndarray:
        """Annotations given standard-normal draws for each noise source."""
        kind = self.noise.kind
        if kind == "absolute":
            extra = self.noise.std_scale * z_noise
        elif kind == "relative":
            extra = self.noise.level * abs(reward) * z_noise
        else:
            extra = self.noise.std_scale * z_noise[0]
        if trap_hit:
            return reward + self.bias + self.trap_std * z_own + extra
        return reward + self.std * z_own + extra


def annotate(
    profiles: Sequence[AnnotatorProfile],
    env_observed_reward: float,
    trap_hit: bool,
    noise: NoiseSpec,
    rng: np.random.Generator,
) -> FeedbackSample:
    panel = AnnotatorPanel(profiles, noise)
    z = rng.standard_normal((2, panel.k))
    values = panel.from_normals(env_observed_reward, trap_hit, z[0], z[1])
    return FeedbackSample(values, float(values.mean()), float(values.std(ddof=1)))


class SigmaHStore:
    """Per ``(state, action)`` EMA of annotator disagreement.

    Unvisited pairs report ``prior`` (0 by default).
    """

    def __init__(self, n_states: int, n_actions: int, tau: float = 0.1, prior: float = 0.0):
        if not 0.0 < tau <= 1.0:
            raise ValueError(f"tau must be in (0, 1], got {tau}")
        self.tau = tau
        self.values = np.full((n_states, n_actions), float(prior))
        self.counts = np.zeros((n_states, n_actions), dtype=np.int64)

    def get(self, s: int, a: int) -> float:
        return float(self.values[s, a])

    def row(self, s: int) -> np.ndarray:
        return self.values[s]

    def update(self, s: int, a: int, sigma_h: float) -> float:
        v = (1.0 - self.tau) * self.values[s, a] + self.tau * sigma_h
        self.values[s, a] = v
        self.counts[s, a] += 1
        return float(v)


def running_sigma_h(store: SigmaHStore, s: int, a: int, sample: FeedbackSample) -> float:
    return store.update(s, a, sample.sigma_h)
