"""Synthetic demonstration generators for the three benchmark motions.

Each generator draws a small family of noisy demonstrations around a
closed-form planar curve:

* ``overlap``: one motion whose path crosses itself once, visiting the
  same point twice with headings more than 90 degrees apart.
* ``multi_motion``: two distinct motions sharing a workspace and touching
  mid-path, with ground-truth labels attached.
* ``snake``: one winding multi-bend sweep.

Generation is deterministic per seed.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidArgumentError
from .trajectory import Dataset, Trajectory

__all__ = ["generate_dataset", "DATASET_KINDS", "OVERLAP_CROSSING"]

DATASET_KINDS = ("overlap", "multi_motion", "snake")

# Self-intersection point of the overlap curve, visited at t = 0 and t = pi.
OVERLAP_CROSSING = (2.0, 1.5)


def _overlap_curve(u: np.ndarray) -> np.ndarray:
    # Lissajous-style figure: exactly one self-crossing at (2, 1.5), where
    # the two visiting headings differ by about 118 degrees.
    t = -0.9 + u * 5.5
    return np.stack([2.0 + 2.0 * np.sin(t), 1.5 + 0.6 * np.sin(2.0 * t)], axis=1)


def _multi_motion_curve(u: np.ndarray, label: int) -> np.ndarray:
    x = 4.0 * u
    if label == 0:
        y = 1.5 - 1.3 * np.cos(np.pi * u)
    else:
        y = 1.5 + 1.3 * np.cos(np.pi * u) + 0.15 * np.sin(2.0 * np.pi * u)
    return np.stack([x, y], axis=1)


def _snake_curve(u: np.ndarray) -> np.ndarray:
    y = 1.5 + 1.1 * (1.0 - 0.3 * u) * np.sin(3.0 * np.pi * u)
    return np.stack([4.0 * u, y], axis=1)


def generate_dataset(
    kind: str,
    seed: int,
    *,
    n_demos: int | None = None,
    n_points: int = 60,
    noise: float = 0.02,
    dt: float = 0.05,
) -> Dataset:
    """Generate a synthetic demonstration dataset.

    Args:
        kind: one of ``overlap``, ``multi_motion``, ``snake``.
        seed: RNG seed; equal seeds give byte-identical datasets.
        n_demos: number of demonstrations (multi_motion requires an even
            count, split half and half). Defaults: overlap 4,
            multi_motion 6, snake 5.
        n_points: nominal samples per demo; each demo jitters this by up
            to three samples.
        noise: standard deviation of isotropic noise added to every sample.
        dt: sampling interval of all demos.

    Returns:
        Dataset named after the kind. ``multi_motion`` carries
        ground-truth labels (first half 0, second half 1); the
        single-motion kinds leave labels unset.
    """
    if kind not in DATASET_KINDS:
        raise InvalidArgumentError(f"unknown dataset kind {kind!r}, expected one of {DATASET_KINDS}")
    if not (np.isfinite(noise) and noise >= 0):
        raise InvalidArgumentError(f"noise must be non-negative, got {noise}")
    if n_points < 8:
        raise InvalidArgumentError(f"n_points must be at least 8, got {n_points}")
    defaults = {"overlap": 4, "multi_motion": 6, "snake": 5}
    count = defaults[kind] if n_demos is None else int(n_demos)
    if count < 1:
        raise InvalidArgumentError(f"n_demos must be positive, got {n_demos}")
    if kind == "multi_motion" and count % 2 != 0:
        raise InvalidArgumentError("multi_motion needs an even n_demos")

    rng = np.random.default_rng(seed)
    demos = []
    labels: tuple[int, ...] | None = None
    if kind == "multi_motion":
        labels = tuple([0] * (count // 2) + [1] * (count // 2))
    for i in range(count):
        n_i = n_points + int(rng.integers(-3, 4))
        u = np.linspace(0.0, 1.0, n_i)
        if kind == "overlap":
            pts = _overlap_curve(u)
        elif kind == "snake":
            pts = _snake_curve(u)
        else:
            pts = _multi_motion_curve(u, labels[i])
        pts = pts + rng.normal(0.0, noise, size=pts.shape)
        demos.append(Trajectory(pts, dt))
    return Dataset(tuple(demos), name=kind, ground_truth_labels=labels)
