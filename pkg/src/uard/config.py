"""Experiment specification and its flat ``key = value`` config format.

Every key has one parser and one human-readable domain; the same table
validates config files and command-line overrides, so error messages name
the offending key, where it came from and what was expected.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, fields, replace
from pathlib import Path
from typing import Any, Callable, Mapping

from .agent import VARIANTS, AgentConfig, DiscountMode, HeadRewards, get_variant
from .env import GridWorldConfig, PerturbationSpec, make_preset
from .filters import FilterParams, FilterVariant
from .supervision import NoiseSpec

__all__ = ["ConfigError", "ExperimentSpec", "LambdaWarning", "parse_config", "parse_config_text"]

LAMBDA_WARN_ABOVE = 10.0


class ConfigError(ValueError):
    pass


class LambdaWarning(UserWarning):
    """Skepticism above the recommended range; exploration will be suppressed."""


@dataclass(frozen=True)
class ExperimentSpec:
    grid: int = 6
    variants: tuple[str, ...] = tuple(VARIANTS)
    n_seeds: int = 10
    n_episodes: int = 500
    lam: float = 5.0
    alpha: float = 0.5
    beta: float = 0.5
    lambdas: tuple[float, ...] = (1.0, 2.0, 5.0)
    noise: float = 0.0
    noise_levels: tuple[float, ...] = (0.0, 0.1, 0.2, 0.3)
    noise_kind: str = "relative"
    mode: DiscountMode = DiscountMode.SCORE
    filter_variant: FilterVariant = FilterVariant.RECIPROCAL
    head_rewards: HeadRewards = HeadRewards.RESAMPLE
    init_scale: float = 0.01
    hard_trap: bool = False
    abstain: bool = False
    adaptive: bool = False
    perturb_step: int = 500
    perturb_magnitude: int = 5
    base_seed: int = 0
    jobs: int = 1
    out: str = "out"
    dump_q: bool = False

    def __post_init__(self) -> None:
        if self.n_seeds < 1:
            raise ConfigError(f"n_seeds must be >= 1, got {self.n_seeds}")
        if self.n_episodes < 1:
            raise ConfigError(f"n_episodes must be >= 1, got {self.n_episodes}")
        for name in self.variants:
            get_variant(name)

    def seeds(self) -> list[int]:
        return [self.base_seed + i for i in range(self.n_seeds)]

    def env_config(self) -> GridWorldConfig:
        env = make_preset(self.grid)
        return env.with_hard_trap() if self.hard_trap else env

    def filter_params(self, lam: float | None = None) -> FilterParams:
        return FilterParams(
            lam=self.lam if lam is None else lam,
            alpha=self.alpha,
            beta=self.beta,
            variant=self.filter_variant,
            adaptive=self.adaptive,
        )

    def agent_config(self, variant: str, lam: float | None = None) -> AgentConfig:
        return AgentConfig(
            variant=get_variant(variant),
            filter=self.filter_params(lam),
            mode=self.mode,
            init_scale=self.init_scale,
            head_rewards=self.head_rewards,
            abstain=self.abstain,
        )

    def noise_spec(self, level: float | None = None) -> NoiseSpec:
        env = self.env_config()
        return NoiseSpec(
            level=self.noise if level is None else level,
            goal_reward=env.goal_reward,
            kind=self.noise_kind,
        )

    def perturbation(self, enabled: bool = True) -> PerturbationSpec:
        return PerturbationSpec(self.perturb_step, self.perturb_magnitude, enabled)

    def replace(self, **changes) -> "ExperimentSpec":
        return replace(self, **changes)

    def to_text(self) -> str:
        """Render the result-affecting settings as a config file.

        ``jobs`` and ``out`` are left out: they never change results.
        """
        inverse = {f: k for k, (f, _, _) in KEYS.items()}
        lines = []
        for f in fields(self):
            if f.name in ("jobs", "out"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, tuple):
                text = ", ".join(_fmt(v) for v in value)
            else:
                text = _fmt(value)
            lines.append(f"{inverse[f.name]} = {text}")
        return "\n".join(lines) + "\n"


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if hasattr(value, "value"):
        return str(value.value)
    return str(value)


# ----------------------------------------------------------------- parsers

def _int(lo: int | None = None, choices: tuple[int, ...] | None = None) -> Callable[[str], int]:
    def parse(raw: str) -> int:
        value = int(raw, 10)
        if choices is not None and value not in choices:
            raise ValueError
        if lo is not None and value < lo:
            raise ValueError
        return value
    return parse


def _float(lo: float | None = None, hi: float | None = None) -> Callable[[str], float]:
    def parse(raw: str) -> float:
        value = float(raw)
        if value != value or value in (float("inf"), float("-inf")):
            raise ValueError
        if (lo is not None and value < lo) or (hi is not None and value > hi):
            raise ValueError
        return value
    return parse


def _float_list(lo: float | None = None, hi: float | None = None) -> Callable[[str], tuple[float, ...]]:
    item = _float(lo, hi)

    def parse(raw: str) -> tuple[float, ...]:
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if not parts:
            raise ValueError
        return tuple(item(p) for p in parts)
    return parse


def _bool(raw: str) -> bool:
    lowered = raw.strip().lower()
    if lowered in ("true", "yes", "on", "1"):
        return True
    if lowered in ("false", "no", "off", "0"):
        return False
    raise ValueError


def _variants(raw: str) -> tuple[str, ...]:
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    if not parts:
        raise ValueError
    if len(parts) == 1 and parts[0].lower() == "all":
        return tuple(VARIANTS)
    return tuple(get_variant(p).name for p in parts)


def _choice(enum_cls) -> Callable[[str], Any]:
    def parse(raw: str):
        for member in enum_cls:
            if member.value.lower() == raw.strip().lower():
                return member
        raise ValueError
    return parse


def _noise_kind(raw: str) -> str:
    if raw not in ("absolute", "relative", "shared"):
        raise ValueError
    return raw


def _path(raw: str) -> str:
    if not raw.strip():
        raise ValueError
    return raw.strip()


# key -> (spec field, parser, domain description)
KEYS: dict[str, tuple[str, Callable[[str], Any], str]] = {
    "grid": ("grid", _int(choices=(6, 8, 10)), "one of 6, 8, 10"),
    "variant": ("variants", _variants, f"'all' or comma-separated names from {', '.join(VARIANTS)}"),
    "seeds": ("n_seeds", _int(lo=1), "integer >= 1"),
    "episodes": ("n_episodes", _int(lo=1), "integer >= 1"),
    "lambda": ("lam", _float(lo=0.0), "real number >= 0"),
    "alpha": ("alpha", _float(0.0, 1.0), "real number in [0, 1]"),
    "beta": ("beta", _float(0.0, 1.0), "real number in [0, 1]"),
    "lambdas": ("lambdas", _float_list(lo=0.0), "comma-separated reals >= 0"),
    "noise": ("noise", _float(0.0, 1.0), "real number in [0, 1]"),
    "noise_levels": ("noise_levels", _float_list(0.0, 1.0), "comma-separated reals in [0, 1]"),
    "noise_kind": ("noise_kind", _noise_kind, "one of absolute, relative, shared"),
    "mode": ("mode", _choice(DiscountMode), "one of score, reward"),
    "filter": ("filter_variant", _choice(FilterVariant), "one of Reciprocal, LinearSubtraction, ExponentialDecay"),
    "head_rewards": ("head_rewards", _choice(HeadRewards), "one of mean, annotator, resample"),
    "init_scale": ("init_scale", _float(lo=0.0), "real number >= 0"),
    "hard_trap": ("hard_trap", _bool, "boolean (true/false)"),
    "abstain": ("abstain", _bool, "boolean (true/false)"),
    "adaptive": ("adaptive", _bool, "boolean (true/false)"),
    "perturb_step": ("perturb_step", _int(lo=0), "integer >= 0"),
    "perturb_magnitude": ("perturb_magnitude", _int(lo=0), "integer >= 0"),
    "base_seed": ("base_seed", _int(lo=0), "integer in [0, 2**64)"),
    "jobs": ("jobs", _int(lo=1), "integer >= 1"),
    "out": ("out", _path, "non-empty directory path"),
    "dump_q": ("dump_q", _bool, "boolean (true/false)"),
}


def _convert(key: str, raw: str, where: str) -> tuple[str, Any]:
    if key not in KEYS:
        raise ConfigError(f"{where}: unknown key '{key}'; expected one of: {', '.join(KEYS)}")
    name, parser, domain = KEYS[key]
    try:
        value = parser(raw)
    except (ValueError, TypeError):
        raise ConfigError(f"{where}: invalid value {raw!r} for key '{key}'; expected {domain}") from None
    if key == "base_seed" and value >= 2**64:
        raise ConfigError(f"{where}: invalid value {raw!r} for key '{key}'; expected {domain}")
    return name, value


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    """Parse config text into spec field values (no defaults applied)."""
    values: dict[str, Any] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}, line {lineno}"
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {line.strip()!r}")
        key, raw = (part.strip() for part in body.split("=", 1))
        name, value = _convert(key, raw, where)
        values[name] = value
    return values


def parse_config(
    path: str | Path | None = None, overrides: Mapping[str, str | None] | None = None
) -> ExperimentSpec:
    """Resolve a spec from an optional config file plus raw string overrides.

    Overrides use config keys (``lambda``, ``seeds``...) and win over the file;
    ``None`` values are ignored.
    """
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file not found: {path}")
        values.update(parse_config_text(path.read_text(encoding="utf-8"), str(path)))
    for key, raw in (overrides or {}).items():
        if raw is None:
            continue
        name, value = _convert(key, str(raw), f"option --{key.replace('_', '-')}")
        values[name] = value
    spec = ExperimentSpec(**values)
    too_high = [lam for lam in (spec.lam, *spec.lambdas) if lam > LAMBDA_WARN_ABOVE]
    if too_high:
        warnings.warn(
            f"lambda {max(too_high):g} exceeds {LAMBDA_WARN_ABOVE:g}; expect reduced exploration "
            "and over-conservative behaviour",
            LambdaWarning,
            stacklevel=2,
        )
    return spec
