import numpy as np
import pytest

import viakit as vk


@pytest.fixture(scope="session")
def hovership():
    return vk.hovership_model()


@pytest.fixture(scope="session")
def bench_grid(hovership):
    """The full benchmark grid: 201 state points x 161 action points."""
    return vk.GridSpec.from_boxes(hovership.state_box, hovership.action_box, 201, 161)


@pytest.fixture(scope="session")
def bench_oracle(hovership, bench_grid):
    return vk.compute_viability(hovership, bench_grid)


@pytest.fixture(scope="session")
def small_grid(hovership):
    """A coarse grid for tests that enumerate cells."""
    return vk.GridSpec.from_boxes(hovership.state_box, hovership.action_box, 41, 17)


@pytest.fixture(scope="session")
def small_oracle(hovership, small_grid):
    return vk.compute_viability(hovership, small_grid)


def random_table(rng, n_states, n_actions, fail_prob):
    """Random transition table with the given per-entry failure probability."""
    table = rng.integers(0, n_states, size=(n_states, n_actions))
    table[rng.random((n_states, n_actions)) < fail_prob] = vk.FAILED
    return table


def toy_grid(n_states, n_actions):
    return vk.GridSpec.from_boxes([[0.0, 1.0]], [[0.0, 1.0]], n_states, n_actions)
