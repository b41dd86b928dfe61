"""Shared fixtures: generated datasets and fitted models are expensive,
so they are built once per session."""

import numpy as np
import pytest

import calm


@pytest.fixture(scope="session")
def mm_dataset():
    return calm.generate_dataset("multi_motion", seed=0)


@pytest.fixture(scope="session")
def mm_model(mm_dataset):
    return calm.fit(mm_dataset, k=2)


@pytest.fixture(scope="session")
def overlap_dataset():
    return calm.generate_dataset("overlap", seed=1)


@pytest.fixture(scope="session")
def overlap_model(overlap_dataset):
    return calm.fit(overlap_dataset, k=1)


@pytest.fixture(scope="session")
def snake_dataset():
    return calm.generate_dataset("snake", seed=2)


@pytest.fixture(scope="session")
def snake_model(snake_dataset):
    return calm.fit(snake_dataset, k=1)


def make_line_mean(n=8, dt=0.1, var=0.04, speed=1.0):
    """Straight-line mean along x with constant speed, for hand checks."""
    states = np.stack([np.arange(n) * speed * dt, np.zeros(n)], axis=1)
    return calm.MeanTrajectory.from_states(states, dt, var * np.eye(2))


@pytest.fixture()
def line_mean():
    return make_line_mean()


@pytest.fixture()
def line_model():
    return calm.ClusterModel(means=(make_line_mean(),))
