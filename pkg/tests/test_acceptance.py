"""Acceptance criteria 1-14.

Each test prints exactly one ``CRITERION <n>: PASS|FAIL`` line with the
measured quantities, then asserts. Expensive experiment runs are shared
through module-scoped fixtures. Run standalone with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import filecmp
import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from uard.agent import AgentConfig, train
from uard.config import ExperimentSpec
from uard.ensemble import QEnsemble
from uard.env import make_preset
from uard.filters import (
    FilterParams,
    FilterVariant,
    batch_score,
    check_proposition_2,
    filter_curve_rows,
    sigma_grid,
)
from uard.harness import (
    OOD_WINDOW,
    post_perturbation_variance,
    read_ood_index,
    run_lambda_sweep,
    run_noise_sweep,
    run_ood_test,
    run_suite,
)
from uard.metrics import reduction_percent, sign_preservation_radius, welch_t_test
from uard.supervision import SigmaHStore, annotate, default_profiles, NoiseSpec

pytestmark = pytest.mark.acceptance

SEEDS = 10
EPISODES = 500


def verdict(capsys, n: int, ok: bool, detail: str) -> None:
    with capsys.disabled():
        print(f"\nCRITERION {n}: {'PASS' if ok else 'FAIL'} | {detail}")
    assert ok, f"criterion {n}: {detail}"


def trap_means(runs) -> list[float]:
    return [r.window_mean("trap_visits") for r in runs]


def mean_of(runs, name: str) -> float:
    return float(np.mean([r.window_mean(name) for r in runs]))


# ------------------------------------------------------------------ fixtures

@pytest.fixture(scope="module")
def workdir(tmp_path_factory) -> Path:
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="module")
def default_suite(workdir):
    spec = ExperimentSpec(out=str(workdir / "a"), n_seeds=SEEDS, n_episodes=EPISODES)
    t0 = time.perf_counter()
    bundle = run_suite(spec)
    return bundle, time.perf_counter() - t0


@pytest.fixture(scope="module")
def runs(default_suite):
    return default_suite[0].results[""]


# ------------------------------------------------------------------ 1-5

def test_criterion_1_nonnegativity(capsys):
    rng = np.random.default_rng(101)
    n = 100_000
    t0 = time.perf_counter()
    mu = rng.uniform(0.0, 100.0, n)
    mu[: n // 100] = 0.0
    sm, sh = rng.exponential(2.0, n), rng.exponential(2.0, n)
    sm[n // 100: n // 50] = 0.0
    lam = rng.uniform(0.0, 20.0, n)
    alpha, beta = rng.uniform(0.0, 1.0, n), rng.uniform(0.0, 1.0, n)
    j = batch_score(FilterVariant.RECIPROCAL, mu, sm, sh, lam, alpha, beta)
    elapsed = time.perf_counter() - t0
    negatives = int(np.sum(j < 0))
    verdict(capsys, 1, negatives == 0 and elapsed < 1.0,
            f"{n} samples, {negatives} negative scores, {elapsed * 1000:.1f} ms")


def test_criterion_2_monotonicity(capsys):
    rng = np.random.default_rng(202)
    n, failures = 10_000, 0
    for _ in range(n):
        params = FilterParams(lam=rng.uniform(0.01, 10.0), alpha=rng.uniform(0.01, 1.0),
                              beta=rng.uniform(0.01, 1.0))
        mu = rng.uniform(0.01, 50.0)
        sm, sh = rng.uniform(0.0, 5.0, 2)
        dm, dh = rng.uniform(1e-3, 5.0, 2)
        failures += not check_proposition_2(params, mu, sm, sh, dm, dh, rtol=1e-6)
    verdict(capsys, 2, failures == 0, f"{n} pairs, {failures} failures (strict decrease + FD within 1e-6 rel)")


def test_criterion_3_filter_shapes(capsys):
    sigmas = sigma_grid(5.0, 0.05)
    rows = filter_curve_rows((1.0, 5.0, 10.0), (1.0, 2.0, 5.0), sigmas)
    table = {(v, mu, lam, s): j for v, mu, lam, s, j in rows}
    order_bad = collapse_bad = collapse_cases = 0
    for (v, mu, lam, s), j in table.items():
        if v != "Reciprocal" or mu <= 0:
            continue
        exp_j = table[("ExponentialDecay", mu, lam, s)]
        if not j >= exp_j >= 0:
            order_bad += 1
        if s > mu / lam:
            collapse_cases += 1
            if not table[("LinearSubtraction", mu, lam, s)] < 0:
                collapse_bad += 1
    ok = order_bad == 0 and collapse_bad == 0 and collapse_cases > 0
    verdict(capsys, 3, ok, f"ordering violations {order_bad}; linear collapse {collapse_cases - collapse_bad}/{collapse_cases} negative")


def _bisect_radius(params, mu, sm, sh, best, runner):
    def gap(d):
        m = mu.copy()
        m[runner] += d
        j = batch_score(params.variant, m, sm, sh, params.lam, params.alpha, params.beta)
        return j[runner] - j[best]

    lo, hi = 0.0, 1.0
    while gap(hi) < 0:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def test_criterion_4_oracles(capsys):
    rng = np.random.default_rng(404)
    worst = {"mu": 0.0, "sigma_m": 0.0, "sigma_h": 0.0, "welch_t": 0.0, "radius": 0.0}
    n = 200
    for _ in range(n):
        heads = rng.normal(0, 5, size=(int(rng.integers(2, 8)), 3, 4))
        ens = QEnsemble(heads)
        s, a = int(rng.integers(3)), int(rng.integers(4))
        col = heads[:, s, a].tolist()
        mu_o = sum(col) / len(col)
        sd_o = math.sqrt(sum((x - mu_o) ** 2 for x in col) / (len(col) - 1))
        worst["mu"] = max(worst["mu"], abs(ens.mean(s, a) - mu_o))
        worst["sigma_m"] = max(worst["sigma_m"], abs(ens.sigma_m(s, a) - sd_o))

        sample = annotate(default_profiles(), float(rng.normal(0, 5)), bool(rng.random() < 0.5),
                          NoiseSpec(float(rng.uniform(0, 0.3))), rng)
        xs = sample.annotations.tolist()
        m = sum(xs) / len(xs)
        worst["sigma_h"] = max(worst["sigma_h"], abs(sample.sigma_h - math.sqrt(sum((x - m) ** 2 for x in xs) / (len(xs) - 1))))

        xa = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3), int(rng.integers(2, 15))).tolist()
        xb = rng.normal(rng.uniform(-5, 5), rng.uniform(0.1, 3), int(rng.integers(2, 15))).tolist()
        ma, mb = sum(xa) / len(xa), sum(xb) / len(xb)
        va = sum((x - ma) ** 2 for x in xa) / (len(xa) - 1)
        vb = sum((x - mb) ** 2 for x in xb) / (len(xb) - 1)
        t_o = (ma - mb) / math.sqrt(va / len(xa) + vb / len(xb))
        worst["welch_t"] = max(worst["welch_t"], abs(welch_t_test(xa, xb).t - t_o))

        params = FilterParams(lam=float(rng.uniform(0.1, 8)), alpha=float(rng.uniform(0.1, 1)),
                              beta=float(rng.uniform(0.1, 1)))
        store = SigmaHStore(3, 4)
        store.values[:] = rng.uniform(0, 2, size=(3, 4))
        mu_v, sm_v = ens.state_stats(s)
        r = sign_preservation_radius(ens, store, params, s)
        j = batch_score(params.variant, mu_v, sm_v, store.row(s), params.lam, params.alpha, params.beta)
        order = np.argsort(-j, kind="stable")
        oracle = _bisect_radius(params, mu_v.copy(), sm_v, store.row(s), int(order[0]), int(order[1]))
        worst["radius"] = max(worst["radius"], abs(r - oracle))
    ok = all(v <= 1e-6 for v in worst.values())
    verdict(capsys, 4, ok, f"{n} instances; max abs error " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()))


def test_criterion_5_determinism(capsys, default_suite, workdir):
    first = default_suite[0].suite_dir
    spec = ExperimentSpec(out=str(workdir / "b"), n_seeds=SEEDS, n_episodes=EPISODES)
    second = run_suite(spec).suite_dir
    files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    differing = [str(p) for p in files if not filecmp.cmp(first / p, second / p, shallow=False)]
    ok = not differing and len(files) > 60
    verdict(capsys, 5, ok, f"{len(files)} files compared, {len(differing)} differ")


# ------------------------------------------------------------------ 6-10

def test_criterion_6_trap_reduction(capsys, runs, default_suite):
    base, uard = mean_of(runs["Baseline"], "trap_visits"), mean_of(runs["UARD-Full"], "trap_visits")
    red = reduction_percent(base, uard)
    elapsed = default_suite[1]
    ok = uard <= 2.0 and red >= 85.0 and base >= 10.0 and elapsed < 120.0
    verdict(capsys, 6, ok,
            f"Baseline {base:.2f}, UARD-Full {uard:.2f}, reduction {red:.1f}%, full 6-variant suite {elapsed:.0f} s")


def test_criterion_7_ablation_ordering(capsys, runs):
    t = {v: mean_of(rs, "trap_visits") for v, rs in runs.items()}
    base = t["Baseline"]
    red = {v: reduction_percent(base, x) for v, x in t.items()}
    checks = {
        "AblationI~Baseline": abs(red["AblationI"]) < 30.0,
        "AblationII~Baseline": abs(red["AblationII"]) < 30.0,
        "Baseline>>HumanOnly": t["HumanOnly"] <= 0.5 * base,
        "HumanOnly>UARD-lite": t["HumanOnly"] > t["UARD-lite"],
        "UARD-lite>UARD-Full": t["UARD-lite"] > t["UARD-Full"],
        "UARD-Full>=85%": red["UARD-Full"] >= 85.0,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = ", ".join(f"{v} {x:.2f}" for v, x in t.items())
    verdict(capsys, 7, not failed, f"{detail}; failed: {failed or 'none'}")


@pytest.fixture(scope="module")
def larger_grids(workdir):
    out = {}
    for grid in (8, 10):
        spec = ExperimentSpec(grid=grid, out=str(workdir / f"g{grid}"), n_seeds=SEEDS, n_episodes=EPISODES)
        out[grid] = run_suite(spec, ["Baseline", "UARD-Full"]).results[""]
    return out


def test_criterion_8_scale(capsys, larger_grids):
    reds = {}
    for grid, rs in larger_grids.items():
        reds[grid] = reduction_percent(mean_of(rs["Baseline"], "trap_visits"), mean_of(rs["UARD-Full"], "trap_visits"))
    ok = all(r >= 80.0 for r in reds.values())
    verdict(capsys, 8, ok, ", ".join(f"{g}x{g} reduction {r:.1f}%" for g, r in reds.items()))


def test_criterion_9_alignment_gap(capsys, runs):
    gb = float(np.mean([r.alignment_gap for r in runs["Baseline"]]))
    gu = float(np.mean([r.alignment_gap for r in runs["UARD-Full"]]))
    ratio = gu / gb
    verdict(capsys, 9, ratio <= 0.15, f"gap Baseline {gb:.2f}, UARD-Full {gu:.2f}, ratio {ratio:.1%}")


def test_criterion_10_significance(capsys, runs):
    res = welch_t_test(trap_means(runs["UARD-Full"]), trap_means(runs["Baseline"]))
    verdict(capsys, 10, res.p < 0.001, f"Welch t = {res.t:.2f}, df = {res.df:.1f}, p = {res.p:.2e}")


# ------------------------------------------------------------------ 11-14

def test_criterion_11_noise(capsys, workdir):
    spec = ExperimentSpec(out=str(workdir / "noise"), n_seeds=SEEDS, n_episodes=EPISODES, noise_levels=(0.0, 0.3))
    res = run_noise_sweep(spec).results
    b0, b3 = mean_of(res["noise_0.00"]["Baseline"], "trap_visits"), mean_of(res["noise_0.30"]["Baseline"], "trap_visits")
    u0, u3 = mean_of(res["noise_0.00"]["UARD-Full"], "trap_visits"), mean_of(res["noise_0.30"]["UARD-Full"], "trap_visits")
    base_up = 100.0 * (b3 - b0) / b0
    ok_b, ok_u = base_up >= 50.0, abs(u3 - u0) <= 2.0
    verdict(capsys, 11, ok_b and ok_u,
            f"Baseline {b0:.2f} -> {b3:.2f} ({base_up:+.1f}%, need >= +50%); "
            f"UARD-Full {u0:.2f} -> {u3:.2f} (|diff| {abs(u3 - u0):.2f}, need <= 2)")


def test_criterion_12_lambda(capsys, workdir):
    spec = ExperimentSpec(out=str(workdir / "lam"), n_seeds=SEEDS, n_episodes=EPISODES, lambdas=(1.0, 2.0, 5.0, 12.0))
    res = run_lambda_sweep(spec).results
    red, goal = {}, {}
    for lam in (1, 2, 5, 12):
        group = res[f"lambda_{lam}"]
        red[lam] = reduction_percent(mean_of(group["Baseline"], "trap_visits"), mean_of(group["UARD-Full"], "trap_visits"))
        goal[lam] = mean_of(group["UARD-Full"], "goal_reached")
    ok_order = red[5] >= red[2] >= red[1]
    ok_goal = goal[12] < goal[5]
    verdict(capsys, 12, ok_order and ok_goal,
            "reduction " + ", ".join(f"l{k} {v:.1f}%" for k, v in red.items())
            + "; goal rate " + ", ".join(f"l{k} {v:.2f}" for k, v in goal.items()))


def test_criterion_13_sigma_h(capsys):
    env = make_preset(6)
    tables = env.tables()
    trap_vals, other_vals = [], []
    for seed in range(SEEDS):
        result = train(env, AgentConfig(), EPISODES, seed)
        store = result.sigma_h_store
        visited = store.counts >= 30
        into_trap = tables.is_trap[tables.next_state]
        trap_vals.append(store.values[visited & into_trap].mean())
        other_vals.append(store.values[visited & ~into_trap].mean())
    trap, other = float(np.mean(trap_vals)), float(np.mean(other_vals))
    ok = 1.0 <= trap <= 1.5 and trap >= 3.0 * other
    verdict(capsys, 13, ok, f"trap sigma_h {trap:.3f}, non-trap {other:.3f}, ratio {trap / other:.1f}x")


def test_criterion_14_ood(capsys, workdir):
    spec = ExperimentSpec(out=str(workdir / "ood"), n_seeds=SEEDS, n_episodes=EPISODES)
    bundle = run_ood_test(spec)
    index = read_ood_index(bundle.suite_dir / "ood.csv")
    var = {
        v: float(np.nanmean([post_perturbation_variance(r, index[(v, r.seed)]) for r in rs]))
        for v, rs in bundle.results[""].items()
    }
    episodes = sorted({e for e in index.values()})
    ratio = var["UARD-Full"] / var["Baseline"]
    verdict(capsys, 14, ratio < 1.0,
            f"post-perturbation ({OOD_WINDOW} episodes) true-return variance Baseline {var['Baseline']:.2f}, "
            f"UARD-Full {var['UARD-Full']:.2f}, ratio {ratio:.3f}; perturbation episodes {episodes}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q"]))
