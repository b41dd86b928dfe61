"""Trajectory data model, resampling, speed estimation, and DTW distance.

Everything downstream (clustering, alignment, control) works on the two
container types defined here: ``Trajectory`` for raw demonstrations and
rollouts, ``MeanTrajectory`` for a learned mean motion with per-state
speeds and a shared emission covariance.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np

from .errors import InvalidArgumentError

__all__ = [
    "Trajectory",
    "MeanTrajectory",
    "Dataset",
    "resample_uniform",
    "estimate_speeds",
    "dtwd",
    "dtw_path",
]


def _as_states(obj, *, min_len: int = 1) -> np.ndarray:
    """Coerce a Trajectory or array-like into a validated (n, d) float array."""
    if isinstance(obj, Trajectory):
        return obj.states
    if isinstance(obj, MeanTrajectory):
        return obj.states
    arr = np.asarray(obj, dtype=float)
    if arr.ndim != 2:
        raise InvalidArgumentError(f"expected a (n, d) state array, got shape {arr.shape}")
    if arr.shape[0] < min_len or arr.shape[1] < 1:
        raise InvalidArgumentError(f"state array too small: shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidArgumentError("state array contains non-finite values")
    return arr


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.array(arr, dtype=float, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Trajectory:
    """A uniformly sampled path through state space.

    Attributes:
        states: (n, d) array of states, one row per sample, n >= 2.
        dt: time between consecutive samples, strictly positive.
    """

    states: np.ndarray
    dt: float

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 2 or arr.shape[1] < 1:
            raise InvalidArgumentError(
                f"trajectory states must be (n, d) with n >= 2, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("trajectory states contain non-finite values")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgumentError(f"dt must be positive and finite, got {self.dt}")
        object.__setattr__(self, "states", _freeze(arr))
        object.__setattr__(self, "dt", float(self.dt))

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def duration(self) -> float:
        """Total time spanned, (n - 1) * dt."""
        return (self.n_states - 1) * self.dt


@dataclass(frozen=True)
class MeanTrajectory:
    """A learned mean motion: states plus per-state speeds and emission noise.

    Attributes:
        states: (F, d) array of mean states.
        dt: nominal time between consecutive mean states.
        speeds: (F,) non-negative speed magnitude at each state.
        emission_cov: (d, d) symmetric positive-definite covariance shared
            by all states, describing how far observations may sit from the
            mean while still being explained by it.
    """

    states: np.ndarray
    dt: float
    speeds: np.ndarray
    emission_cov: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.states, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise InvalidArgumentError(
                f"mean states must be (F, d) with F >= 1, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise InvalidArgumentError("mean states contain non-finite values")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgumentError(f"dt must be positive and finite, got {self.dt}")
        spd = np.asarray(self.speeds, dtype=float)
        if spd.shape != (arr.shape[0],):
            raise InvalidArgumentError(
                f"speeds must have shape ({arr.shape[0]},), got {spd.shape}"
            )
        if not np.all(np.isfinite(spd)) or np.any(spd < 0):
            raise InvalidArgumentError("speeds must be finite and non-negative")
        cov = np.asarray(self.emission_cov, dtype=float)
        d = arr.shape[1]
        if cov.shape != (d, d):
            raise InvalidArgumentError(
                f"emission_cov must have shape ({d}, {d}), got {cov.shape}"
            )
        if not np.all(np.isfinite(cov)):
            raise InvalidArgumentError("emission_cov contains non-finite values")
        scale = max(float(np.abs(cov).max()), 1.0)
        if float(np.abs(cov - cov.T).max()) > 1e-9 * scale:
            raise InvalidArgumentError("emission_cov must be symmetric")
        cov = 0.5 * (cov + cov.T)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise InvalidArgumentError("emission_cov must be positive definite") from None
        object.__setattr__(self, "states", _freeze(arr))
        object.__setattr__(self, "dt", float(self.dt))
        object.__setattr__(self, "speeds", _freeze(spd))
        object.__setattr__(self, "emission_cov", _freeze(cov))

    @staticmethod
    def from_states(states, dt: float, emission_cov) -> "MeanTrajectory":
        """Build a mean trajectory, deriving speeds by finite differences."""
        arr = _as_states(states, min_len=2)
        return MeanTrajectory(arr, dt, estimate_speeds(arr, dt), emission_cov)

    @property
    def n_states(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    @property
    def endpoint(self) -> np.ndarray:
        return self.states[-1]

    @property
    def spacing(self) -> float:
        """Mean distance between consecutive states (0 for a single state)."""
        if self.n_states < 2:
            return 0.0
        return float(np.linalg.norm(np.diff(self.states, axis=0), axis=1).mean())

    @cached_property
    def cov_inv(self) -> np.ndarray:
        return _freeze(np.linalg.inv(self.emission_cov))

    @cached_property
    def cov_log_det(self) -> float:
        sign, logdet = np.linalg.slogdet(self.emission_cov)
        return float(logdet)

    def with_emission_cov(self, emission_cov) -> "MeanTrajectory":
        return replace(self, emission_cov=emission_cov)


@dataclass(frozen=True)
class Dataset:
    """A named bundle of demonstrations sharing one sampling rate.

    Attributes:
        demos: the demonstration trajectories, all with equal dt and dim.
        name: free-form dataset name.
        ground_truth_labels: optional per-demo cluster index, used only
            for scoring recovered assignments.
    """

    demos: tuple[Trajectory, ...]
    name: str = "dataset"
    ground_truth_labels: tuple[int, ...] | None = None

    def __post_init__(self):
        demos = tuple(self.demos)
        if not demos:
            raise InvalidArgumentError("dataset needs at least one demonstration")
        if any(not isinstance(t, Trajectory) for t in demos):
            raise InvalidArgumentError("demos must be Trajectory instances")
        dims = {t.dim for t in demos}
        if len(dims) != 1:
            raise InvalidArgumentError(f"demos disagree on dimension: {sorted(dims)}")
        dts = {t.dt for t in demos}
        if len(dts) != 1:
            raise InvalidArgumentError(f"demos disagree on dt: {sorted(dts)}")
        labels = self.ground_truth_labels
        if labels is not None:
            labels = tuple(int(v) for v in labels)
            if len(labels) != len(demos):
                raise InvalidArgumentError(
                    f"got {len(labels)} labels for {len(demos)} demos"
                )
            if any(v < 0 for v in labels):
                raise InvalidArgumentError("labels must be non-negative")
        object.__setattr__(self, "demos", demos)
        object.__setattr__(self, "name", str(self.name))
        object.__setattr__(self, "ground_truth_labels", labels)

    @property
    def dim(self) -> int:
        return self.demos[0].dim

    @property
    def dt(self) -> float:
        return self.demos[0].dt


def resample_uniform(traj: Trajectory, dt_target: float) -> Trajectory:
    """Resample a trajectory to a new uniform sampling interval.

    The path is treated as piecewise linear in time. Endpoints are
    preserved exactly; the output sample count is chosen so the new
    spacing covers the same duration, n_out = round(duration / dt_target) + 1.

    Args:
        traj: source trajectory.
        dt_target: requested sampling interval, > 0.

    Returns:
        A new trajectory spanning the same duration. When dt_target equals
        the source dt the source samples are returned unchanged.
    """
    if not (np.isfinite(dt_target) and dt_target > 0):
        raise InvalidArgumentError(f"dt_target must be positive and finite, got {dt_target}")
    if dt_target == traj.dt:
        return traj
    duration = traj.duration
    ratio = duration / dt_target
    n_out = max(int(round(ratio)) + 1, 2)
    # Record the requested dt when it divides the duration; otherwise the
    # actual spacing differs and must be reported honestly.
    exact = abs(ratio - round(ratio)) <= 1e-9 * max(ratio, 1.0)
    dt_out = dt_target if exact else duration / (n_out - 1)

    t = np.linspace(0.0, duration, n_out)
    pos = t / traj.dt
    idx = np.clip(np.floor(pos).astype(int), 0, traj.n_states - 2)
    frac = (pos - idx)[:, None]
    out = traj.states[idx] * (1.0 - frac) + traj.states[idx + 1] * frac
    out[0] = traj.states[0]
    out[-1] = traj.states[-1]
    return Trajectory(out, dt_out)


def estimate_speeds(states, dt: float) -> np.ndarray:
    """Speed magnitude at each state by forward differences.

    The last state repeats the speed of the final segment so the result
    has one entry per state.

    Args:
        states: (n, d) array or Trajectory, n >= 2.
        dt: time between consecutive states, > 0.

    Returns:
        (n,) array of non-negative speeds.
    """
    arr = _as_states(states, min_len=2)
    if not (np.isfinite(dt) and dt > 0):
        raise InvalidArgumentError(f"dt must be positive and finite, got {dt}")
    seg = np.linalg.norm(np.diff(arr, axis=0), axis=1) / dt
    return np.concatenate([seg, seg[-1:]])


def _accumulated_cost(cost: np.ndarray) -> np.ndarray:
    """Dynamic-programming table for DTW with steps right, down, diagonal.

    Row recurrence: with E[j] = acc[i, j] - S[j] where S is the cumulative
    row cost, E[j] = min(E[j-1], best_in[j] - S[j-1]) is a running minimum,
    so each row is one vectorized ``minimum.accumulate`` instead of a
    Python loop over columns.
    """
    n, m = cost.shape
    acc = np.empty_like(cost)
    acc[0] = np.cumsum(cost[0])
    for i in range(1, n):
        prev = acc[i - 1]
        best_in = np.empty(m)
        best_in[0] = prev[0]
        np.minimum(prev[1:], prev[:-1], out=best_in[1:])
        s = np.cumsum(cost[i])
        best_in[1:] -= s[:-1]
        acc[i] = np.minimum.accumulate(best_in)
        acc[i] += s
    return acc


def _pairwise_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(np.maximum(((a[:, None, :] - b[None, :, :]) ** 2).sum(axis=2), 0.0))


def dtwd(a, b) -> float:
    """Dynamic time warping distance between two state sequences.

    Alignment starts at the first pair, ends at the last pair, and moves
    by steps (1,0), (0,1), or (1,1). The local cost is the Euclidean
    distance between matched states; the result is the summed cost along
    the best path, without length normalization.

    Args:
        a, b: Trajectory instances or (n, d) arrays with matching d.

    Returns:
        The accumulated alignment cost. Zero iff the sequences are equal
        up to repeated consecutive states.
    """
    sa = _as_states(a)
    sb = _as_states(b)
    if sa.shape[1] != sb.shape[1]:
        raise InvalidArgumentError(
            f"dimension mismatch: {sa.shape[1]} vs {sb.shape[1]}"
        )
    return float(_accumulated_cost(_pairwise_dist(sa, sb))[-1, -1])


def dtw_path(a, b) -> tuple[float, list[tuple[int, int]]]:
    """DTW cost together with one optimal alignment path.

    Ties during backtracking prefer the diagonal step, then the step that
    advances ``a``. The path runs from (0, 0) to (n-1, m-1) inclusive.

    Returns:
        (cost, path) where path is a list of (index into a, index into b).
    """
    sa = _as_states(a)
    sb = _as_states(b)
    if sa.shape[1] != sb.shape[1]:
        raise InvalidArgumentError(
            f"dimension mismatch: {sa.shape[1]} vs {sb.shape[1]}"
        )
    acc = _accumulated_cost(_pairwise_dist(sa, sb))
    i, j = sa.shape[0] - 1, sb.shape[0] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if diag <= up and diag <= left:
                i -= 1
                j -= 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    path.reverse()
    return float(acc[-1, -1]), path
