# Copyright (C) 2026 The vldnp Authors
# SPDX-License-Identifier: Apache-2.0
"""Smoke tests for the Python bindings."""

import math

import numpy as np
import pytest

import vldnp


def test_triad_world_basics():
    world = vldnp.World.triad()
    assert world.concepts == ["cat", "dog", "nsfw"]
    assert world.unsafe_concepts == ["nsfw"]
    # Three equal isotropic modes: the density at a mode is dominated by that mode.
    expected = math.log(1 / 3 / (2 * math.pi * 0.25))
    assert world.log_density(-2.0, 0.0) == pytest.approx(expected, abs=1e-3)
    assert world.concept_posterior(0.0, 2.0, ["nsfw"]) > 0.999


def test_score_matches_finite_difference():
    world = vldnp.World.triad()
    h = 1e-5
    x, y, ab = 0.3, -0.7, 0.4
    sx, sy = world.score(x, y, ab, ["cat", "nsfw"])
    fx = (world.log_density(x + h, y, ab, ["cat", "nsfw"]) - world.log_density(x - h, y, ab, ["cat", "nsfw"])) / (2 * h)
    fy = (world.log_density(x, y + h, ab, ["cat", "nsfw"]) - world.log_density(x, y - h, ab, ["cat", "nsfw"])) / (2 * h)
    assert sx == pytest.approx(fx, abs=1e-6)
    assert sy == pytest.approx(fy, abs=1e-6)


def test_sampling_is_seeded():
    world = vldnp.World.triad()
    a = world.sample(1000, 5, ["cat"])
    b = world.sample(1000, 5, ["cat"])
    assert a.shape == (1000, 2)
    np.testing.assert_array_equal(a, b)
    assert np.allclose(a.mean(axis=0), [-2.0, 0.0], atol=0.1)


def test_schedule_and_grid():
    ab = vldnp.alpha_bars()
    assert len(ab) == 1000
    assert ab[0] == pytest.approx(1 - 1e-4)
    grid = vldnp.step_grid()
    assert grid[0] == 1000 and grid[-1] == 20 and len(grid) == 50


def test_resolved_config_defaults():
    cfg = vldnp.resolve_config({})
    assert cfg["guidance"]["omega_pos"] == 7.5
    assert cfg["experiment"]["omega_neg_sweep"] == [0, 7.5, 15, 20, 25]
    assert vldnp.config_digest({}) == vldnp.config_digest({"experiment": {"threads": 3}})


def test_dynamic_sample_logs_scheduled_queries():
    _, events = vldnp.sample({"guidance": {"variant": "dynamic_v5"}}, index=0)
    steps = [e["step"] for e in events if e["kind"] == "query"]
    assert steps == [4, 5, 6, 8, 11, 15, 20, 26, 33, 41]


def test_small_sweep_and_pareto(tmp_path):
    rows = vldnp.sweep({"experiment": {"trajectories": 200, "omega_neg_sweep": [0, 20]}}, out=tmp_path)
    assert len(rows) == 4
    assert {r["method"] for r in rows} == {"dynamic", "static"}
    assert all(r["status"] == "ok" for r in rows)
    assert (tmp_path / "results.csv").exists()
    front = vldnp.pareto(tmp_path / "results.csv")
    assert len(front) == 4
    assert front == vldnp.pareto(rows)


def test_invalid_config_raises():
    with pytest.raises(ValueError):
        vldnp.resolve_config({"no_such_group": {}})
    with pytest.raises(vldnp.VldnpError):
        vldnp.sweep({"experiment": {"trajectories": 0}})
