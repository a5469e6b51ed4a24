import itertools

import numpy as np
import pytest

from uard.env import (
    Action,
    GridState,
    GridWorldConfig,
    PerturbationSpec,
    TerminalStateError,
    apply_perturbation,
    make_preset,
    reset,
    step,
)


@pytest.mark.parametrize(
    "size, traps, max_steps",
    [
        (6, [(3, 3)], 40),
        (8, [(3, 3), (5, 6)], 60),
        (10, [(3, 3), (5, 6), (7, 4)], 80),
    ],
)
def test_presets(size, traps, max_steps):
    cfg = make_preset(size)
    assert (cfg.width, cfg.height) == (size, size)
    assert list(cfg.traps) == traps
    assert cfg.max_steps == max_steps
    assert cfg.start == (0, 0)
    assert cfg.goal == (size - 1, size - 1)
    assert make_preset(f"G{size}") == cfg


def test_unknown_preset():
    with pytest.raises(ValueError):
        make_preset(7)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(width=1, height=6),
        dict(width=6, height=6, max_steps=0),
        dict(width=6, height=6, traps=[(6, 0)]),
        dict(width=6, height=6, traps=[(5, 5)]),
        dict(width=6, height=6, traps=[(0, 0)]),
        dict(width=6, height=6, goal=(0, 0)),
    ],
)
def test_invalid_configs(kwargs):
    with pytest.raises(ValueError):
        GridWorldConfig(**kwargs)


def test_reset_is_fresh():
    cfg = make_preset(6)
    assert reset(cfg) == GridState((0, 0), 0)
    assert reset(cfg) == reset(cfg)
    state = reset(cfg)
    for _ in range(cfg.max_steps):
        state = step(cfg, state, Action.LEFT).next_state
    assert reset(cfg) == GridState((0, 0), 0)


def test_boundary_clamp():
    cfg = make_preset(6)
    out = step(cfg, reset(cfg), Action.UP)
    assert out.next_state.position == (0, 0)
    assert out.observed_reward == pytest.approx(-0.1)
    assert out.true_reward == pytest.approx(-0.1)
    assert not out.terminal and not out.trap_hit


def test_trap_rewards():
    cfg = make_preset(6)
    out = step(cfg, GridState((3, 2), 5), Action.RIGHT)
    assert out.next_state.position == (3, 3)
    assert out.trap_hit
    assert out.observed_reward == pytest.approx(3.9)
    assert out.true_reward == pytest.approx(-1.1)
    assert not out.terminal


def test_goal_rewards():
    cfg = make_preset(6)
    out = step(cfg, GridState((5, 4), 3), Action.RIGHT)
    assert out.goal_reached and out.terminal
    assert out.observed_reward == pytest.approx(9.9)
    assert out.true_reward == pytest.approx(9.9)


def test_hard_trap():
    cfg = make_preset(6).with_hard_trap()
    out = step(cfg, GridState((3, 2), 0), Action.RIGHT)
    assert out.observed_reward == pytest.approx(7.9)


def test_terminal_step_rejected():
    cfg = make_preset(6)
    with pytest.raises(TerminalStateError):
        step(cfg, GridState((5, 5), 3), Action.UP)
    with pytest.raises(TerminalStateError):
        step(cfg, GridState((1, 1), cfg.max_steps), Action.UP)


def test_timeout_is_terminal():
    cfg = make_preset(6)
    out = step(cfg, GridState((1, 1), cfg.max_steps - 1), Action.UP)
    assert out.terminal and not out.goal_reached


def test_coordinates():
    cfg = make_preset(6)
    s = GridState((2, 2), 0)
    assert step(cfg, s, Action.UP).next_state.position == (1, 2)
    assert step(cfg, s, Action.DOWN).next_state.position == (3, 2)
    assert step(cfg, s, Action.LEFT).next_state.position == (2, 1)
    assert step(cfg, s, Action.RIGHT).next_state.position == (2, 3)


@pytest.mark.parametrize(
    "size, start, magnitude, expected",
    [(10, (2, 2), 5, (7, 7)), (6, (4, 4), 5, (5, 5)), (6, (1, 3), 0, (1, 3))],
)
def test_perturbation(size, start, magnitude, expected):
    cfg = make_preset(size)
    out = apply_perturbation(cfg, GridState(start, 7), PerturbationSpec(0, magnitude, True))
    assert out == GridState(expected, 7)


def test_perturbation_validation():
    with pytest.raises(ValueError):
        PerturbationSpec(magnitude=-1)
    with pytest.raises(ValueError):
        apply_perturbation(make_preset(6), GridState((0, 0), 0), PerturbationSpec(enabled=False))


def test_episode_length_bound():
    cfg = make_preset(6)
    rng = np.random.default_rng(3)
    for _ in range(50):
        state, n = reset(cfg), 0
        while True:
            out = step(cfg, state, int(rng.integers(4)))
            n += 1
            state = out.next_state
            if out.terminal:
                break
        assert n <= cfg.max_steps


@pytest.mark.parametrize("size", [6, 8, 10])
def test_tables_match_step(size):
    cfg = make_preset(size)
    tables = cfg.tables()
    for s, a in itertools.product(range(cfg.n_states), Action):
        cell = cfg.cell(s)
        if cell == cfg.goal:
            continue
        out = step(cfg, GridState(cell, 0), a)
        nxt = cfg.index(out.next_state.position)
        assert tables.next_state[s, a] == nxt
        assert tables.observed_reward[nxt] == pytest.approx(out.observed_reward)
        assert tables.true_reward[nxt] == pytest.approx(out.true_reward)
        assert tables.is_trap[nxt] == out.trap_hit
        assert tables.stay[s, a] == (out.next_state.position == cell)


def test_config_roundtrip():
    cfg = make_preset(8).with_hard_trap()
    assert GridWorldConfig.from_dict(cfg.to_dict()) == cfg
