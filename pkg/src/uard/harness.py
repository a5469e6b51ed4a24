"""Experiment suites: run matrices of (condition, variant, seed), write CSVs and reports.

Layout under ``<out>/<suite>/``::

    config.txt                      resolved spec
    [<condition>/]<variant>/seed_<k>.csv
    aggregate.csv
    report.md
    ood.csv                         ood-test only

Reports are always built from the CSVs on disk, so ``stats`` regenerates
byte-identical aggregates and reports.
"""

from __future__ import annotations

import csv
import logging
import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from .agent import AgentConfig, train
from .config import ExperimentSpec
from .env import GridWorldConfig, PerturbationSpec
from .filters import export_filter_curves, sigma_grid
from .metrics import (
    WINDOW_METRICS,
    EpisodeMetrics,
    RunSummary,
    aggregate,
    pooled_t_test,
    reduction_percent,
    summarize_run,
    welch_t_test,
)
from .supervision import NoiseSpec

__all__ = [
    "EPISODE_HEADER",
    "CURVE_HEADER",
    "ReportBundle",
    "RunError",
    "load_suite",
    "read_episode_csv",
    "recompute",
    "run_filter_ablation",
    "run_lambda_sweep",
    "run_noise_sweep",
    "run_ood_test",
    "run_suite",
    "write_episode_csv",
]

log = logging.getLogger(__name__)

EPISODE_HEADER = (
    "episode,true_return,observed_return,trap_visits,abstentions,"
    "goal_reached,mean_sigma_m,mean_sigma_h,epsilon"
)
CURVE_HEADER = "variant,mu,lambda,sigma,j"
SWEEP_PAIR = ("Baseline", "UARD-Full")
OOD_WINDOW = 50


class RunError(RuntimeError):
    pass


def fmt6(x: float) -> str:
    text = f"{x:.6f}"
    return "0.000000" if text == "-0.000000" else text


# ------------------------------------------------------------------ CSV I/O

def episode_row(m: EpisodeMetrics) -> str:
    return ",".join(
        (
            str(m.episode),
            fmt6(m.true_return),
            fmt6(m.observed_return),
            str(m.trap_visits),
            str(m.abstentions),
            str(int(m.goal_reached)),
            fmt6(m.mean_sigma_m),
            fmt6(m.mean_sigma_h),
            fmt6(m.epsilon),
        )
    )


def write_episode_csv(path: Path, episodes: Iterable[EpisodeMetrics]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [EPISODE_HEADER, *(episode_row(m) for m in episodes)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_episode_csv(path: Path) -> list[EpisodeMetrics]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = ",".join(next(reader))
        if header != EPISODE_HEADER:
            raise ValueError(f"{path}: unexpected header {header!r}")
        return [
            EpisodeMetrics(
                episode=int(r[0]),
                true_return=float(r[1]),
                observed_return=float(r[2]),
                trap_visits=int(r[3]),
                abstentions=int(r[4]),
                goal_reached=bool(int(r[5])),
                mean_sigma_m=float(r[6]),
                mean_sigma_h=float(r[7]),
                epsilon=float(r[8]),
            )
            for r in reader
        ]


# ------------------------------------------------------------------ running

@dataclass(frozen=True)
class RunTask:
    condition: str
    variant: str
    seed: int
    env: GridWorldConfig
    agent: AgentConfig
    noise: NoiseSpec
    n_episodes: int
    perturbation: PerturbationSpec | None = None
    q_path: str | None = None


@dataclass(frozen=True)
class RunOutput:
    summary: RunSummary
    perturbed_episode: int


def execute(task: RunTask) -> RunOutput:
    try:
        result = train(
            task.env, task.agent, task.n_episodes, task.seed,
            noise=task.noise, perturbation=task.perturbation,
        )
    except Exception as exc:  # surface which run failed
        raise RunError(f"run failed for variant={task.variant} seed={task.seed}: {exc}") from exc
    if task.q_path:
        result.ensemble.to_csv(task.q_path)
    return RunOutput(result.summary, result.clock.perturbed_episode)


def run_tasks(tasks: Sequence[RunTask], jobs: int = 1) -> Iterator[RunOutput]:
    """Yield outputs in task order regardless of completion order."""
    if jobs <= 1 or len(tasks) <= 1:
        yield from map(execute, tasks)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        yield from pool.map(execute, tasks)


@dataclass
class Condition:
    label: str
    lam: float | None = None
    noise: float | None = None
    perturbation: PerturbationSpec | None = None


@dataclass
class ReportBundle:
    suite_dir: Path
    run_csvs: list[Path] = field(default_factory=list)
    aggregate_csv: Path | None = None
    report_md: Path | None = None
    ood_csv: Path | None = None
    results: dict[str, dict[str, list[RunSummary]]] = field(default_factory=dict)


def _run_dir(suite_dir: Path, condition: str, variant: str) -> Path:
    return suite_dir / condition / variant if condition else suite_dir / variant


def _prepare(suite_dir: Path) -> None:
    try:
        suite_dir.mkdir(parents=True, exist_ok=True)
        probe = suite_dir / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise RunError(f"output directory {suite_dir} is not writable: {exc}") from exc


def _execute_matrix(
    spec: ExperimentSpec,
    kind: str,
    conditions: Sequence[Condition],
    variants: Sequence[str],
) -> ReportBundle:
    suite_dir = Path(spec.out) / kind
    _prepare(suite_dir)
    (suite_dir / "config.txt").write_text(spec.to_text(), encoding="utf-8")
    env = spec.env_config()
    tasks = []
    for cond in conditions:
        for variant in variants:
            run_dir = _run_dir(suite_dir, cond.label, variant)
            for seed in spec.seeds():
                tasks.append(
                    RunTask(
                        condition=cond.label,
                        variant=variant,
                        seed=seed,
                        env=env,
                        agent=spec.agent_config(variant, cond.lam),
                        noise=spec.noise_spec(cond.noise),
                        n_episodes=spec.n_episodes,
                        perturbation=cond.perturbation,
                        q_path=str(run_dir / f"q_seed_{seed}.csv") if spec.dump_q else None,
                    )
                )
                if spec.dump_q:
                    run_dir.mkdir(parents=True, exist_ok=True)
    bundle = ReportBundle(suite_dir)
    ood_rows = []
    for task, output in zip(tasks, run_tasks(tasks, spec.jobs)):
        path = _run_dir(suite_dir, task.condition, task.variant) / f"seed_{task.seed}.csv"
        write_episode_csv(path, output.summary.episodes)
        bundle.run_csvs.append(path)
        log.info("wrote %s", path)
        if task.perturbation is not None:
            ood_rows.append((task.variant, task.seed, output.perturbed_episode))
    if ood_rows:
        _write_ood_index(suite_dir / "ood.csv", ood_rows)
    recomputed = recompute(suite_dir, kind)
    recomputed.run_csvs = bundle.run_csvs
    return recomputed


def run_suite(spec: ExperimentSpec, variants: Sequence[str] | None = None) -> ReportBundle:
    """Variant x seed matrix under one configuration."""
    return _execute_matrix(spec, "suite", [Condition("")], list(variants or spec.variants))


def run_noise_sweep(spec: ExperimentSpec, variants: Sequence[str] | None = None) -> ReportBundle:
    conds = [Condition(noise_label(level), noise=level) for level in spec.noise_levels]
    return _execute_matrix(spec, "noise-sweep", conds, list(variants or SWEEP_PAIR))


def run_lambda_sweep(spec: ExperimentSpec, variants: Sequence[str] | None = None) -> ReportBundle:
    conds = [Condition(lambda_label(lam), lam=lam) for lam in spec.lambdas]
    return _execute_matrix(spec, "lambda-sweep", conds, list(variants or SWEEP_PAIR))


def run_ood_test(spec: ExperimentSpec, variants: Sequence[str] | None = None) -> ReportBundle:
    conds = [Condition("", perturbation=spec.perturbation(True))]
    return _execute_matrix(spec, "ood-test", conds, list(variants or SWEEP_PAIR))


def run_filter_ablation(
    spec: ExperimentSpec,
    mus: Sequence[float] = (1.0, 5.0, 10.0),
    lambdas: Sequence[float] = (1.0, 2.0, 5.0),
) -> Path:
    path = Path(spec.out) / "filter-curves" / "curves.csv"
    _prepare(path.parent)
    export_filter_curves(mus, lambdas, sigma_grid(5.0, 0.05), path)
    return path


def noise_label(level: float) -> str:
    return f"noise_{level:.2f}"


def lambda_label(lam: float) -> str:
    return f"lambda_{lam:g}"


# ------------------------------------------------------------------ OOD index

def _write_ood_index(path: Path, rows: Sequence[tuple[str, int, int]]) -> None:
    lines = ["variant,seed,perturbed_episode"]
    lines += [f"{v},{s},{e}" for v, s, e in rows]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def post_perturbation_variance(run: RunSummary, perturbed_episode: int, window: int = OOD_WINDOW) -> float:
    """Sample variance of true return over the ``window`` episodes after the perturbation."""
    if perturbed_episode < 0:
        return float("nan")
    values = run.series("true_return")[perturbed_episode + 1: perturbed_episode + 1 + window]
    return float(values.var(ddof=1)) if values.size > 1 else float("nan")


# ------------------------------------------------------------------ loading + reports

_SEED_RE = re.compile(r"^seed_(\d+)\.csv$")


def load_suite(suite_dir: Path) -> dict[str, dict[str, list[RunSummary]]]:
    """Read every per-episode CSV under ``suite_dir``, grouped and seed-ordered."""
    results: dict[str, dict[str, list[RunSummary]]] = {}
    for path in sorted(suite_dir.rglob("seed_*.csv")):
        m = _SEED_RE.match(path.name)
        if not m:
            continue
        parts = path.relative_to(suite_dir).parts
        if len(parts) == 2:
            condition, variant = "", parts[0]
        elif len(parts) == 3:
            condition, variant = parts[0], parts[1]
        else:
            continue
        run = summarize_run(int(m.group(1)), variant, read_episode_csv(path))
        results.setdefault(condition, {}).setdefault(variant, []).append(run)
    for by_variant in results.values():
        for runs in by_variant.values():
            runs.sort(key=lambda r: r.seed)
    return results


def _condition_order(results) -> list[str]:
    def key(label: str):
        m = re.match(r"^[a-z]+_([-+0-9.eE]+)$", label)
        return (0, float(m.group(1)), label) if m else (1, 0.0, label)
    return sorted(results, key=key)


def _variant_order(variants: Iterable[str]) -> list[str]:
    from .agent import VARIANTS

    known = [v for v in VARIANTS if v in variants]
    return known + sorted(v for v in variants if v not in VARIANTS)


AGG_METRICS = (*WINDOW_METRICS, "alignment_gap")


def _aggregate_csv(results) -> tuple[str, dict]:
    lines = ["condition,variant,n_seeds," + ",".join(f"{m}_mean,{m}_std" for m in AGG_METRICS)]
    table = {}
    for cond in _condition_order(results):
        groups = results[cond]
        runs = [r for v in _variant_order(groups) for r in groups[v]]
        agg = aggregate(runs) if all(len(g) >= 2 for g in groups.values()) else _single_seed(groups)
        table[cond] = agg
        for v in _variant_order(groups):
            cells = [cond or "default", v, str(len(groups[v]))]
            for m in AGG_METRICS:
                cells += [fmt6(agg[v][m]["mean"]), fmt6(agg[v][m]["std"])]
            lines.append(",".join(cells))
    return "\n".join(lines) + "\n", table


def _single_seed(groups):
    out = {}
    for v, runs in groups.items():
        stats = {}
        for m in AGG_METRICS:
            vals = np.array([r.alignment_gap if m == "alignment_gap" else r.window_mean(m) for r in runs])
            stats[m] = {"mean": float(vals.mean()), "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0}
        out[v] = stats
    return out


def _pm(stats: dict) -> str:
    return f"{stats['mean']:.2f} ± {stats['std']:.2f}"


def _reduction(base: float, treated: float) -> str:
    if base <= 0:
        return "n/a"
    return f"{reduction_percent(base, treated):.1f}%"


def _ttest_line(base_runs, runs) -> str:
    a = [r.window_mean("trap_visits") for r in runs]
    b = [r.window_mean("trap_visits") for r in base_runs]
    if len(a) < 2 or len(b) < 2:
        return "n/a (needs >= 2 seeds)"
    def fmt(res) -> str:
        p = "< 0.001" if res.p < 0.001 else f"= {res.p:.4f}"
        return f"t = {res.t:.2f}, df = {res.df:.1f}, p {p}"

    return f"Welch {fmt(welch_t_test(a, b))}; pooled {fmt(pooled_t_test(a, b))}"


def _variant_table(cond: str, groups, agg) -> list[str]:
    src = "aggregate.csv" + (f" (condition `{cond}`)" if cond else "")
    lines = [
        f"Source: {src}; per-seed CSVs under `{cond + '/' if cond else ''}<variant>/seed_<k>.csv`.",
        "",
        "| Variant | True return | Observed return | Trap visits | Goal rate | Alignment gap | Trap reduction | t-test vs Baseline (trap visits) |",
        "|---|---|---|---|---|---|---|---|",
    ]
    base = agg.get("Baseline")
    for v in _variant_order(groups):
        s = agg[v]
        red = _reduction(base["trap_visits"]["mean"], s["trap_visits"]["mean"]) if base else "n/a"
        tt = _ttest_line(groups["Baseline"], groups[v]) if base and v != "Baseline" else "-"
        lines.append(
            f"| {v} | {_pm(s['true_return'])} | {_pm(s['observed_return'])} | {_pm(s['trap_visits'])} "
            f"| {_pm(s['goal_reached'])} | {_pm(s['alignment_gap'])} | {red} | {tt} |"
        )
    return lines


def _label_value(label: str) -> float:
    return float(label.split("_", 1)[1])


def _slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    if len(xs) < 2:
        return float("nan")
    return float(np.polyfit(np.asarray(xs, float), np.asarray(ys, float), 1)[0])


def _noise_section(table) -> list[str]:
    conds = [c for c in _condition_order(table) if c.startswith("noise_")]
    if not conds or not all("Baseline" in table[c] and "UARD-Full" in table[c] for c in conds):
        return []
    levels = [_label_value(c) for c in conds]
    base = [table[c]["Baseline"]["trap_visits"]["mean"] for c in conds]
    uard = [table[c]["UARD-Full"]["trap_visits"]["mean"] for c in conds]
    lines = [
        "## Noise robustness",
        "",
        "Safety violations are final-window trap visits per episode. Source: aggregate.csv.",
        "",
        "| Noise | Baseline | UARD-Full | Reduction |",
        "|---|---|---|---|",
    ]
    for c, lv, b, u in zip(conds, levels, base, uard):
        lines.append(
            f"| {lv:.0%} | {_pm(table[c]['Baseline']['trap_visits'])} | "
            f"{_pm(table[c]['UARD-Full']['trap_visits'])} | {_reduction(b, u)} |"
        )
    sb, su = _slope(levels, base), _slope(levels, uard)
    ratio = su / sb if sb not in (0.0,) and not math.isnan(sb) else float("nan")
    lines += [
        "",
        f"- Baseline slope: {sb:.3f} visits per unit noise; UARD-Full slope: {su:.3f}; slope ratio (UARD/Baseline): {ratio:.3f}",
        f"- Baseline change from {levels[0]:.0%} to {levels[-1]:.0%}: {100.0 * (base[-1] - base[0]) / base[0]:+.1f}%"
        if base[0] > 0 else "- Baseline change: n/a",
        f"- UARD-Full change from {levels[0]:.0%} to {levels[-1]:.0%}: {uard[-1] - uard[0]:+.2f} visits/episode",
        "",
    ]
    return lines


def _lambda_section(table) -> list[str]:
    conds = [c for c in _condition_order(table) if c.startswith("lambda_")]
    if not conds or not all("Baseline" in table[c] and "UARD-Full" in table[c] for c in conds):
        return []
    lines = [
        "## Skepticism sweep",
        "",
        "Source: aggregate.csv.",
        "",
        "| lambda | UARD-Full trap visits | Reduction vs Baseline | UARD-Full goal rate |",
        "|---|---|---|---|",
    ]
    for c in conds:
        b, u = table[c]["Baseline"], table[c]["UARD-Full"]
        lines.append(
            f"| {_label_value(c):g} | {_pm(u['trap_visits'])} | "
            f"{_reduction(b['trap_visits']['mean'], u['trap_visits']['mean'])} | {_pm(u['goal_reached'])} |"
        )
    return lines + [""]


def read_ood_index(path: Path) -> dict[tuple[str, int], int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {(r["variant"], int(r["seed"])): int(r["perturbed_episode"]) for r in csv.DictReader(fh)}


def ood_variances(results, index: dict[tuple[str, int], int]) -> dict[str, list[float]]:
    out: dict[str, list[float]] = {}
    for variant, runs in results.get("", {}).items():
        out[variant] = [post_perturbation_variance(r, index.get((variant, r.seed), -1)) for r in runs]
    return out


def _ood_section(results, suite_dir: Path) -> list[str]:
    path = suite_dir / "ood.csv"
    if not path.exists():
        return []
    var = ood_variances(results, read_ood_index(path))
    lines = [
        "## OOD response",
        "",
        f"Per-episode true-return variance over the {OOD_WINDOW} episodes after the perturbation "
        "(perturbation episode per run: ood.csv; returns: seed CSVs).",
        "",
        "| Variant | Mean post-perturbation variance |",
        "|---|---|",
    ]
    def mean_var(v):
        vals = [x for x in var[v] if not np.isnan(x)]
        return float(np.mean(vals)) if vals else float("nan")

    for v in _variant_order(var):
        lines.append(f"| {v} | {mean_var(v):.3f} |")
    if "Baseline" in var and "UARD-Full" in var:
        ratio = mean_var("UARD-Full") / mean_var("Baseline")
        lines += ["", f"- Variance ratio (UARD-Full / Baseline): {ratio:.3f}"]
    return lines + [""]


def _render_report(kind: str, suite_dir: Path, results, table) -> str:
    config_note = "config.txt" if (suite_dir / "config.txt").exists() else "n/a"
    lines = [f"# {kind} report", "", f"Resolved configuration: {config_note}. Final window: last 100 episodes.", ""]
    for cond in _condition_order(results):
        if cond:
            lines += [f"## Condition `{cond}`", ""]
        lines += _variant_table(cond, results[cond], table[cond]) + [""]
    lines += _noise_section(table)
    lines += _lambda_section(table)
    lines += _ood_section(results, suite_dir)
    return "\n".join(lines).rstrip("\n") + "\n"


def recompute(suite_dir: Path | str, kind: str | None = None) -> ReportBundle:
    """Rebuild ``aggregate.csv`` and ``report.md`` from the per-seed CSVs."""
    suite_dir = Path(suite_dir)
    results = load_suite(suite_dir)
    if not results:
        raise RunError(f"no seed_<k>.csv files under {suite_dir}")
    kind = kind or suite_dir.name
    text, table = _aggregate_csv(results)
    bundle = ReportBundle(suite_dir, results=results)
    bundle.aggregate_csv = suite_dir / "aggregate.csv"
    bundle.aggregate_csv.write_text(text, encoding="utf-8")
    bundle.report_md = suite_dir / "report.md"
    bundle.report_md.write_text(_render_report(kind, suite_dir, results, table), encoding="utf-8")
    if (suite_dir / "ood.csv").exists():
        bundle.ood_csv = suite_dir / "ood.csv"
    return bundle


def find_suites(root: Path | str) -> list[Path]:
    """Suite directories at or directly below ``root``."""
    root = Path(root)
    if any(root.rglob("seed_*.csv")) and (root / "config.txt").exists():
        return [root]
    return [p for p in sorted(root.iterdir()) if p.is_dir() and any(p.rglob("seed_*.csv"))]
