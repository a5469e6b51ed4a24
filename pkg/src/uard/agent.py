"""Epsilon-greedy control over filtered action scores, and the training loop.

The six experiment variants differ only in which uncertainty signals reach
the score and whether the score discounts at all; everything else (heads,
annotators, random streams) is shared, so variants are directly comparable
under one seed.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .ensemble import QEnsemble
from .env import N_ACTIONS, Action, GridWorldConfig, PerturbationSpec, TransitionTables
from .filters import FilterParams, adaptive_lambda, score_vector
from .metrics import EpisodeMetrics, RunSummary, summarize_run
from .rng import make_stream
from .supervision import AnnotatorPanel, AnnotatorProfile, NoiseSpec, SigmaHStore, default_profiles

__all__ = [
    "VARIANTS",
    "AgentConfig",
    "DiscountMode",
    "HeadRewards",
    "PolicyConfig",
    "StepClock",
    "TieBreak",
    "VariantSpec",
    "get_variant",
    "run_episode",
    "run_training",
    "select_action",
]


class TieBreak(str, enum.Enum):
    LOWEST_INDEX = "LowestActionIndex"
    RANDOM = "RandomUniform"


class DiscountMode(str, enum.Enum):
    SCORE = "score"
    REWARD = "reward"


class HeadRewards(str, enum.Enum):
    """What each ensemble head is trained on.

    ``MEAN``: every head sees the annotator mean. ``ANNOTATOR``: head ``i``
    sees annotator ``i mod K``. ``RESAMPLE``: each head sees an annotator
    drawn uniformly at random on every transition, so heads agree in
    expectation but disagree where annotators do.
    """

    MEAN = "mean"
    ANNOTATOR = "annotator"
    RESAMPLE = "resample"


@dataclass(frozen=True)
class PolicyConfig:
    epsilon_start: float = 1.0
    epsilon_decay: float = 0.995
    epsilon_min: float = 0.05
    tie_break: TieBreak = TieBreak.LOWEST_INDEX

    def __post_init__(self) -> None:
        object.__setattr__(self, "tie_break", TieBreak(self.tie_break))
        if not 0.0 <= self.epsilon_min <= self.epsilon_start <= 1.0:
            raise ValueError("need 0 <= epsilon_min <= epsilon_start <= 1")
        if not 0.0 < self.epsilon_decay <= 1.0:
            raise ValueError("epsilon_decay must be in (0, 1]")

    def epsilon(self, episode: int) -> float:
        return max(self.epsilon_min, self.epsilon_start * self.epsilon_decay**episode)


@dataclass(frozen=True)
class VariantSpec:
    name: str
    use_sigma_m: bool
    use_sigma_h: bool
    use_discounting: bool


VARIANTS: dict[str, VariantSpec] = {
    v.name: v
    for v in (
        VariantSpec("Baseline", False, False, False),
        VariantSpec("AblationI", True, False, False),
        VariantSpec("AblationII", True, True, False),
        VariantSpec("UARD-lite", True, False, True),
        VariantSpec("HumanOnly", False, True, True),
        VariantSpec("UARD-Full", True, True, True),
    )
}


def get_variant(name: str | VariantSpec) -> VariantSpec:
    if isinstance(name, VariantSpec):
        return name
    for key, spec in VARIANTS.items():
        if key.lower() == str(name).lower():
            return spec
    raise ValueError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}")


@dataclass(frozen=True)
class AgentConfig:
    """Hyper-parameters of one learner."""

    variant: VariantSpec = VARIANTS["UARD-Full"]
    filter: FilterParams = field(default_factory=FilterParams)
    mode: DiscountMode = DiscountMode.SCORE
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    n_heads: int = 5
    learning_rate: float = 0.1
    discount_factor: float = 0.95
    init_scale: float = 0.01
    head_rewards: HeadRewards = HeadRewards.RESAMPLE
    abstain: bool = False
    sigma_h_tau: float = 0.1
    adaptive_window: int = 100

    def __post_init__(self) -> None:
        object.__setattr__(self, "variant", get_variant(self.variant))
        object.__setattr__(self, "mode", DiscountMode(self.mode))
        object.__setattr__(self, "head_rewards", HeadRewards(self.head_rewards))

    def replace(self, **changes) -> "AgentConfig":
        return replace(self, **changes)


@dataclass
class StepClock:
    """Run-level mutable state shared across episodes.

    Tracks the global step counter, whether the one-off perturbation has
    fired, and the trailing window of total uncertainty used by the adaptive
    skepticism rule.
    """

    global_step: int = 0
    perturbed: bool = False
    perturbed_episode: int = -1
    sigma_window: deque = field(default_factory=lambda: deque(maxlen=100))
    lambda_trace: list = field(default_factory=list)


def _effective_sigmas(variant: VariantSpec, sigma_m, sigma_h):
    return (sigma_m if variant.use_sigma_m else 0.0 * sigma_m,
            sigma_h if variant.use_sigma_h else 0.0 * sigma_h)


def _argmax(values: np.ndarray, tie_break: TieBreak, tie_u: float) -> int:
    if tie_break is TieBreak.LOWEST_INDEX:
        return int(values.argmax())
    ties = np.flatnonzero(values == values.max())
    return int(ties[min(int(tie_u * ties.size), ties.size - 1)])


def _greedy(
    mu: np.ndarray,
    sigma_m: np.ndarray,
    sigma_h: np.ndarray,
    config: AgentConfig,
    lam: float,
    tie_u: float,
    stay: np.ndarray | None,
) -> tuple[int, bool]:
    variant = config.variant
    if not variant.use_discounting:
        lam = 0.0
    sm, sh = _effective_sigmas(variant, sigma_m, sigma_h)
    j, risk = score_vector(config.filter, mu, sm, sh, lam=lam)
    if config.abstain and np.all(risk > config.filter.abstain_threshold):
        if stay is not None and stay.any():
            return int(np.flatnonzero(stay)[0]), True
        return int(np.argmin(risk)), True
    return _argmax(j, config.policy.tie_break, tie_u), False


def select_action(
    ensemble: QEnsemble,
    sigma_h_store: SigmaHStore,
    config: AgentConfig,
    s: int,
    epsilon: float,
    rng: np.random.Generator,
    stay: np.ndarray | None = None,
    lam: float | None = None,
) -> tuple[Action, bool]:
    """Epsilon-greedy choice over filtered scores at state ``s``.

    Returns ``(action, abstained)``. ``stay`` marks actions the boundary would
    clamp; the first of them is the abstention move when abstaining.
    """
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must be in [0, 1], got {epsilon}")
    u, explore_a, tie_u = rng.random(), int(rng.integers(N_ACTIONS)), rng.random()
    if u < epsilon:
        return Action(explore_a), False
    mu, sigma_m = ensemble.state_stats(s)
    a, abstained = _greedy(
        mu, sigma_m, sigma_h_store.row(s), config,
        config.filter.lam if lam is None else lam, tie_u, stay,
    )
    return Action(a), abstained


def run_episode(
    env_config: GridWorldConfig,
    ensemble: QEnsemble,
    annotators: AnnotatorPanel,
    sigma_h_store: SigmaHStore,
    config: AgentConfig,
    epsilon: float,
    rng: np.random.Generator,
    perturbation: PerturbationSpec | None = None,
    clock: StepClock | None = None,
    episode: int = 0,
    tables: TransitionTables | None = None,
) -> EpisodeMetrics:
    """Roll out and learn from one episode.

    Random numbers are drawn in fixed-size blocks at the start of the episode
    so the stream consumed does not depend on the variant being trained.
    """
    tables = tables or env_config.tables()
    clock = clock if clock is not None else StepClock()
    n_steps = env_config.max_steps
    k = annotators.k
    explore_u = rng.random(n_steps).tolist()
    explore_a = rng.integers(N_ACTIONS, size=n_steps).tolist()
    tie_u = rng.random(n_steps).tolist()
    z = rng.standard_normal((n_steps, 2, k))
    pick = rng.integers(k, size=(n_steps, ensemble.n_heads))

    variant = config.variant
    fparams = config.filter
    heads = ensemble.heads
    n_heads = ensemble.n_heads
    head_idx = np.arange(n_heads) % k
    lr = ensemble.learning_rate
    gamma = ensemble.discount_factor
    inv_n = 1.0 / n_heads
    inv_dof = 1.0 / (n_heads - 1)
    inv_k = 1.0 / k
    inv_kdof = 1.0 / (k - 1)
    sh_values = sigma_h_store.values
    sh_counts = sigma_h_store.counts
    tau = sigma_h_store.tau
    next_state = tables.next_state.tolist()
    is_trap = tables.is_trap.tolist()
    observed_reward = tables.observed_reward.tolist()
    true_reward = tables.true_reward.tolist()
    goal_state = tables.goal
    adaptive = fparams.adaptive and variant.use_discounting
    reward_mode = config.mode is DiscountMode.REWARD
    lam_eff = fparams.lam if variant.use_discounting else 0.0

    s = tables.start
    true_ret = obs_ret = 0.0
    traps = abstentions = 0
    goal = False
    sum_sm = sum_sh = 0.0
    t = 0
    while t < n_steps:
        if (
            perturbation is not None
            and perturbation.enabled
            and not clock.perturbed
            and clock.global_step >= perturbation.trigger_step
        ):
            cell = env_config.cell(s)
            row = min(cell[0] + perturbation.magnitude, env_config.height - 1)
            col = min(cell[1] + perturbation.magnitude, env_config.width - 1)
            s = env_config.index((row, col))
            clock.perturbed = True
            clock.perturbed_episode = episode
            if s == tables.goal:
                goal = True
                break

        q = heads[:, s, :]
        mu = q.sum(axis=0) * inv_n
        dev = q - q[0]
        dev = dev - dev.sum(axis=0) * inv_n
        sigma_m = np.sqrt((dev * dev).sum(axis=0) * inv_dof)
        sigma_h = sh_values[s]

        lam = lam_eff
        if adaptive:
            sm, sh = _effective_sigmas(variant, sigma_m, sigma_h)
            total = fparams.alpha * sm + fparams.beta * sh
            baseline = float(np.mean(clock.sigma_window)) if clock.sigma_window else float(total.mean())
            lam = np.array([adaptive_lambda(fparams, a_sm, a_sh, baseline) for a_sm, a_sh in zip(sm, sh)])

        abstained = False
        if explore_u[t] < epsilon:
            a = int(explore_a[t])
        else:
            a, abstained = _greedy(mu, sigma_m, sigma_h, config, lam, tie_u[t], tables.stay[s])
        abstentions += abstained

        if adaptive:
            sm_a = sigma_m[a] if variant.use_sigma_m else 0.0
            sh_a = sigma_h[a] if variant.use_sigma_h else 0.0
            clock.sigma_window.append(fparams.alpha * sm_a + fparams.beta * sh_a)
            clock.lambda_trace.append(float(np.atleast_1d(lam)[a if np.ndim(lam) else 0]))

        s_next = next_state[s][a]
        trap_hit = is_trap[s_next]
        reached = s_next == goal_state
        t += 1
        clock.global_step += 1
        terminal = reached or t == n_steps

        zt = z[t - 1]
        annotations = annotators.from_normals(observed_reward[s_next], trap_hit, zt[0], zt[1])
        mean_h = float(annotations.sum()) * inv_k
        ann_dev = annotations - mean_h
        sample_sigma_h = float(np.sqrt((ann_dev * ann_dev).sum() * inv_kdof))
        sh_now = (1.0 - tau) * sh_values[s, a] + tau * sample_sigma_h
        sh_values[s, a] = sh_now
        sh_counts[s, a] += 1

        if config.head_rewards is HeadRewards.RESAMPLE:
            target = annotations[pick[t - 1]]
        elif config.head_rewards is HeadRewards.ANNOTATOR:
            target = annotations[head_idx]
        else:
            target = mean_h
        if reward_mode:
            sm_a = sigma_m[a] if variant.use_sigma_m else 0.0
            sh_a = sh_now if variant.use_sigma_h else 0.0
            lam_a = float(np.atleast_1d(lam)[a]) if np.ndim(lam) else lam
            target = target / (1.0 + lam_a * (fparams.alpha * sm_a + fparams.beta * sh_a))
        if not terminal:
            target = target + gamma * heads[:, s_next, :].max(axis=1)
        col = heads[:, s, a]
        heads[:, s, a] = col + lr * (target - col)

        obs_ret += mean_h
        true_ret += true_reward[s_next]
        traps += trap_hit
        sum_sm += sigma_m[a]
        sum_sh += sh_now
        s = s_next
        if reached:
            goal = True
            break

    return EpisodeMetrics(
        episode=episode,
        true_return=float(true_ret),
        observed_return=float(obs_ret),
        trap_visits=int(traps),
        abstentions=int(abstentions),
        goal_reached=goal,
        mean_sigma_m=float(sum_sm / t) if t else 0.0,
        mean_sigma_h=float(sum_sh / t) if t else 0.0,
        epsilon=float(epsilon),
    )


@dataclass
class TrainingResult:
    summary: RunSummary
    ensemble: QEnsemble
    sigma_h_store: SigmaHStore
    clock: StepClock


def train(
    env_config: GridWorldConfig,
    config: AgentConfig,
    n_episodes: int = 500,
    seed: int = 0,
    profiles: Sequence[AnnotatorProfile] | None = None,
    noise: NoiseSpec | None = None,
    perturbation: PerturbationSpec | None = None,
) -> TrainingResult:
    """Train one learner from scratch and keep its final tables."""
    profiles = tuple(profiles) if profiles is not None else default_profiles()
    noise = noise or NoiseSpec(goal_reward=env_config.goal_reward)
    ensemble = QEnsemble.init(
        config.n_heads, env_config.n_states, N_ACTIONS, config.init_scale, seed,
        config.learning_rate, config.discount_factor,
    )
    store = SigmaHStore(env_config.n_states, N_ACTIONS, tau=config.sigma_h_tau)
    panel = AnnotatorPanel(profiles, noise)
    rng = make_stream(seed, "episodes")
    clock = StepClock(sigma_window=deque(maxlen=config.adaptive_window))
    tables = env_config.tables()
    episodes = []
    for e in range(n_episodes):
        eps = config.policy.epsilon(e)
        episodes.append(
            run_episode(env_config, ensemble, panel, store, config, eps, rng,
                        perturbation, clock, episode=e, tables=tables)
        )
    summary = summarize_run(seed, config.variant.name, episodes)
    return TrainingResult(summary, ensemble, store, clock)


def run_training(
    env_config: GridWorldConfig,
    config: AgentConfig,
    n_episodes: int = 500,
    seed: int = 0,
    profiles: Sequence[AnnotatorProfile] | None = None,
    noise: NoiseSpec | None = None,
    perturbation: PerturbationSpec | None = None,
) -> RunSummary:
    return train(env_config, config, n_episodes, seed, profiles, noise, perturbation).summary
