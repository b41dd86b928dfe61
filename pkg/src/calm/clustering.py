"""EM clustering of demonstrations into mean trajectories under DTW.

The E-step soft-assigns each demonstration to each cluster with weight
proportional to exp(-dtwd / temperature); the M-step re-estimates every
cluster mean by DTW barycenter averaging of its weighted members. The
objective is the responsibility-weighted sum of DTW distances; iteration
stops once it no longer improves, and a step that would increase it is
rolled back, so the recorded trace is non-increasing.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .trajectory import (
    Dataset,
    MeanTrajectory,
    Trajectory,
    dtw_path,
    dtwd,
    estimate_speeds,
    resample_uniform,
)

__all__ = [
    "FitConfig",
    "ClusterModel",
    "fit",
    "barycenter_update",
    "estimate_emission_cov",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitConfig:
    """Knobs for ``fit``.

    Attributes:
        n_mean_states: states per mean; defaults to the median demo length.
        temperature: softness of the E-step assignment; defaults to one
            fifth of the median pairwise demo DTW distance.
        tol: stop once the objective improves by less than
            tol * max(|objective|, 1) in one iteration.
        max_iters: EM iteration cap.
        cov_floor: minimum emission variance; defaults to the squared mean
            state spacing. An emission sigma of at least one spacing keeps
            adjacent states' likelihoods overlapping, so online alignment
            can hand probability mass forward as the observer advances;
            tighter floors let the posterior pin to one state and stall
            kernels whose transition rows allow self-loops.
        k_max: largest cluster count tried when k is chosen automatically.
    """

    n_mean_states: int | None = None
    temperature: float | None = None
    tol: float = 1e-4
    max_iters: int = 50
    cov_floor: float | None = None
    k_max: int = 6

    def __post_init__(self):
        if self.n_mean_states is not None and self.n_mean_states < 2:
            raise InvalidArgumentError("n_mean_states must be at least 2")
        if self.k_max < 1:
            raise InvalidArgumentError("k_max must be at least 1")
        if self.temperature is not None and not (
            np.isfinite(self.temperature) and self.temperature > 0
        ):
            raise InvalidArgumentError("temperature must be positive")
        if not (np.isfinite(self.tol) and self.tol >= 0):
            raise InvalidArgumentError("tol must be non-negative")
        if self.max_iters < 1:
            raise InvalidArgumentError("max_iters must be at least 1")
        if self.cov_floor is not None and not (
            np.isfinite(self.cov_floor) and self.cov_floor > 0
        ):
            raise InvalidArgumentError("cov_floor must be positive")


@dataclass(frozen=True)
class ClusterModel:
    """Learned clusters plus fit diagnostics.

    Attributes:
        means: one mean trajectory per cluster.
        responsibilities: (n_demos, k) soft assignment from the final
            E-step; rows sum to one. None for hand-built models.
        objective_trace: accepted objective value per EM iteration,
            non-increasing.
        meta: free-form fit metadata (k, temperature, reseeds, ...).
    """

    means: tuple[MeanTrajectory, ...]
    responsibilities: np.ndarray | None = None
    objective_trace: tuple[float, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        means = tuple(self.means)
        if not means:
            raise InvalidArgumentError("model needs at least one mean trajectory")
        if any(not isinstance(m, MeanTrajectory) for m in means):
            raise InvalidArgumentError("means must be MeanTrajectory instances")
        dims = {m.dim for m in means}
        if len(dims) != 1:
            raise InvalidArgumentError(f"means disagree on dimension: {sorted(dims)}")
        object.__setattr__(self, "means", means)
        resp = self.responsibilities
        if resp is not None:
            resp = np.asarray(resp, dtype=float)
            if resp.ndim != 2 or resp.shape[1] != len(means):
                raise InvalidArgumentError(
                    f"responsibilities must be (n, {len(means)}), got {resp.shape}"
                )
            resp = resp.copy()
            resp.setflags(write=False)
        object.__setattr__(self, "responsibilities", resp)
        object.__setattr__(self, "objective_trace", tuple(float(v) for v in self.objective_trace))

    @property
    def k(self) -> int:
        return len(self.means)

    @property
    def dim(self) -> int:
        return self.means[0].dim

    def hard_labels(self) -> np.ndarray:
        if self.responsibilities is None:
            raise InvalidArgumentError("model carries no responsibilities")
        return np.argmax(self.responsibilities, axis=1)


def _resample_to_count(traj: Trajectory, count: int) -> np.ndarray:
    if count < 2:
        raise InvalidArgumentError("count must be at least 2")
    if traj.n_states == count:
        return traj.states.copy()
    return resample_uniform(traj, traj.duration / (count - 1)).states.copy()


def barycenter_update(
    members,
    current_mean: MeanTrajectory,
    weights=None,
) -> MeanTrajectory:
    """One DTW barycenter averaging step.

    Every member is aligned against the current mean; each mean state is
    replaced by the weighted average of all member samples matched to it.
    Speeds are re-derived from the new states; the emission covariance is
    carried over unchanged.

    Args:
        members: trajectories (or state arrays) to average.
        current_mean: alignment target, F >= 2.
        weights: optional per-member non-negative weights; at least one
            must be positive. Defaults to all ones.
    """
    members = list(members)
    if not members:
        raise InvalidArgumentError("need at least one member")
    if current_mean.n_states < 2:
        raise InvalidArgumentError("current_mean needs at least 2 states")
    if weights is None:
        weights = np.ones(len(members))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(members),):
            raise InvalidArgumentError(
                f"weights shape {weights.shape} != ({len(members)},)"
            )
        if np.any(~np.isfinite(weights)) or np.any(weights < 0):
            raise InvalidArgumentError("weights must be finite and non-negative")
    if not np.any(weights > 0):
        raise InvalidArgumentError("at least one member weight must be positive")

    F, d = current_mean.states.shape
    pos_sum = np.zeros((F, d))
    w_sum = np.zeros(F)
    for member, w in zip(members, weights):
        if w <= 0.0:
            continue
        states = member.states if isinstance(member, Trajectory) else np.asarray(member, float)
        _, path = dtw_path(states, current_mean.states)
        for mi, ci in path:
            pos_sum[ci] += w * states[mi]
            w_sum[ci] += w
    # Boundary-matched paths touch every mean state at least once.
    new_states = pos_sum / w_sum[:, None]
    return MeanTrajectory(
        states=new_states,
        dt=current_mean.dt,
        speeds=estimate_speeds(new_states, current_mean.dt),
        emission_cov=current_mean.emission_cov,
    )


def estimate_emission_cov(
    members,
    mean: MeanTrajectory,
    weights=None,
    floor: float = 1e-4,
) -> np.ndarray:
    """Isotropic emission covariance from alignment residuals.

    Residuals are member samples minus the mean state each is matched to
    under DTW; sigma^2 is their weighted mean squared norm, floored at
    ``floor``, and the result is sigma^2 * I.
    """
    members = list(members)
    if not members:
        raise InvalidArgumentError("need at least one member")
    if weights is None:
        weights = np.ones(len(members))
    else:
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(members),):
            raise InvalidArgumentError(
                f"weights shape {weights.shape} != ({len(members)},)"
            )
    if not (np.isfinite(floor) and floor > 0):
        raise InvalidArgumentError(f"floor must be positive, got {floor}")
    d = mean.dim
    sq = 0.0
    total = 0.0
    for member, w in zip(members, weights):
        if w <= 0.0:
            continue
        states = member.states if isinstance(member, Trajectory) else np.asarray(member, float)
        _, path = dtw_path(states, mean.states)
        res = np.array([states[mi] - mean.states[ci] for mi, ci in path])
        sq += w * float((res**2).sum()) / len(path)
        total += w
    if total <= 0.0:
        raise InvalidArgumentError("at least one member weight must be positive")
    var = max(sq / total, floor)
    return var * np.eye(d)


def _pairwise_dtw(demos) -> np.ndarray:
    n = len(demos)
    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            D[i, j] = D[j, i] = dtwd(demos[i], demos[j])
    return D


def _seed_indices(pairwise: np.ndarray, k: int) -> list[int]:
    """Farthest-point seeding: start from the overall outlier, then greedily
    take the demo farthest from every seed chosen so far."""
    first = int(np.argmax(pairwise.sum(axis=1)))
    seeds = [first]
    while len(seeds) < k:
        dist_to_seeds = pairwise[:, seeds].min(axis=1)
        dist_to_seeds[seeds] = -np.inf
        seeds.append(int(np.argmax(dist_to_seeds)))
    return seeds


def _distances(demos, means) -> np.ndarray:
    return np.array([[dtwd(demo, m.states) for m in means] for demo in demos])


def _responsibilities(D: np.ndarray, temperature: float) -> np.ndarray:
    z = -D / temperature
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def fit(dataset: Dataset, k: int | None = None, config: FitConfig = FitConfig()) -> ClusterModel:
    """Cluster a dataset into k mean trajectories by DTW-based EM.

    With ``k=None`` the cluster count is chosen by fitting k = 1..k_max
    and taking the smallest k whose objective improvement over the next
    k falls below 20 percent (a plain elbow rule; treat it as a rough
    heuristic, not a model-selection guarantee).

    Returns:
        A ClusterModel whose objective_trace is non-increasing. Clusters
        left empty by the hard assignment are reseeded from the worst-fit
        demonstration, recorded under meta["reseeds"].
    """
    if k is None:
        return _fit_auto_k(dataset, config)
    return _fit_fixed_k(dataset, k, config)


def _fit_auto_k(dataset: Dataset, config: FitConfig) -> ClusterModel:
    k_max = min(config.k_max, len(dataset.demos))
    models = [_fit_fixed_k(dataset, kk, config) for kk in range(1, k_max + 1)]
    objectives = [m.objective_trace[-1] for m in models]
    chosen = k_max
    for kk in range(1, k_max):
        prev, nxt = objectives[kk - 1], objectives[kk]
        if (prev - nxt) < 0.2 * max(prev, 1e-12):
            chosen = kk
            break
    model = models[chosen - 1]
    model.meta["auto_k"] = {"objectives": objectives, "chosen": chosen}
    return model


def _fit_fixed_k(dataset: Dataset, k: int, config: FitConfig) -> ClusterModel:
    demos = dataset.demos
    n = len(demos)
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must lie in 1..{n}, got {k}")
    F = config.n_mean_states or int(np.median([t.n_states for t in demos]))
    F = max(F, 2)

    pairwise = _pairwise_dtw(demos)
    if config.temperature is not None:
        temperature = config.temperature
    else:
        off = pairwise[~np.eye(n, dtype=bool)]
        med = float(np.median(off)) if off.size else 0.0
        temperature = med / 5.0 if med > 0 else 1.0

    placeholder_cov = np.eye(dataset.dim)
    means = []
    for idx in _seed_indices(pairwise, k):
        states = _resample_to_count(demos[idx], F)
        means.append(
            MeanTrajectory(states, dataset.dt, estimate_speeds(states, dataset.dt), placeholder_cov)
        )

    trace: list[float] = []
    reseeds: list[dict] = []
    best_means = list(means)
    best_resp = np.full((n, k), 1.0 / k)
    for iteration in range(config.max_iters):
        D = _distances(demos, means)
        resp = _responsibilities(D, temperature)
        objective = float((resp * D).sum())
        if trace and objective > trace[-1]:
            # The soft E-step is not guaranteed to lower this objective;
            # roll back to the previous accepted state and stop.
            means = best_means
            resp = best_resp
            break
        improved = not trace or (trace[-1] - objective) >= config.tol * max(abs(objective), 1.0)
        trace.append(objective)
        best_means = list(means)
        best_resp = resp
        if not improved and len(trace) > 1:
            break

        hard = np.argmax(resp, axis=1)
        for r in range(k):
            if not np.any(hard == r):
                worst = int(np.argmax(D[np.arange(n), hard]))
                states = _resample_to_count(demos[worst], F)
                means[r] = MeanTrajectory(
                    states, dataset.dt, estimate_speeds(states, dataset.dt), placeholder_cov
                )
                reseeds.append({"iteration": iteration, "cluster": r, "demo": worst})
                log.info("reseeded empty cluster %d from demo %d", r, worst)
        means = [
            barycenter_update(demos, means[r], weights=resp[:, r]) for r in range(k)
        ]

    means = best_means
    resp = best_resp
    spacing = float(np.mean([m.spacing for m in means]))
    floor = config.cov_floor if config.cov_floor is not None else max(spacing**2, 1e-8)
    means = [
        means[r].with_emission_cov(
            estimate_emission_cov(demos, means[r], weights=resp[:, r], floor=floor)
        )
        for r in range(k)
    ]
    return ClusterModel(
        means=tuple(means),
        responsibilities=resp,
        objective_trace=tuple(trace),
        meta={
            "k": k,
            "n_mean_states": F,
            "temperature": temperature,
            "cov_floor": floor,
            "reseeds": reseeds,
            "dataset": dataset.name,
        },
    )
