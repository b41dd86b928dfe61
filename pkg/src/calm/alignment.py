"""Hidden-Markov alignment between an observed agent and a mean trajectory.

The mean trajectory's F states are HMM hidden states; the observation
model is a Gaussian centered on each mean state with the trajectory's
shared emission covariance. Transition rows come from one of four kernel
families built on the radial basis weight

    rbf(a, b, sigma) = exp(-||a - b||^2 / (2 sigma))

applied to state indices. The forward pass keeps the joint rescaled to
sum to one per step and accumulates the log marginal likelihood
separately, so long sequences never underflow.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import InvalidArgumentError
from .trajectory import MeanTrajectory

__all__ = [
    "KERNEL_FAMILIES",
    "TransitionKernel",
    "AlignmentState",
    "rbf",
    "emission",
    "log_emissions",
    "transition_row",
    "transition_matrix",
    "init_alignment",
    "forward_update",
    "posterior",
    "predict_next",
    "log_marginal",
]

log = logging.getLogger(__name__)

KERNEL_FAMILIES = ("gradient_predict", "stable_forward", "backwards", "periodic")

# Smallest positive normal double; used when a whole row or joint underflows.
_TINY = float(np.finfo(float).tiny)


def rbf(a, b, sigma: float) -> float:
    """Radial basis weight exp(-||a - b||^2 / (2 sigma)) between two points.

    Note the denominator is 2 sigma, not 2 sigma^2: sigma already has
    squared-distance units. Points may be scalars or equal-length vectors.
    """
    if not (np.isfinite(sigma) and sigma > 0):
        raise InvalidArgumentError(f"sigma must be positive and finite, got {sigma}")
    diff = np.atleast_1d(np.asarray(a, dtype=float) - np.asarray(b, dtype=float))
    if diff.ndim != 1:
        raise InvalidArgumentError(f"rbf expects points, got shape {diff.shape}")
    return float(np.exp(-(diff @ diff) / (2.0 * sigma)))


@dataclass(frozen=True)
class TransitionKernel:
    """Family plus shape parameters for transition rows over F states.

    Attributes:
        family: one of ``gradient_predict``, ``stable_forward``,
            ``backwards``, ``periodic``.
        sigma: RBF width over index distance (squared-index units).
            Defaults to (2 * delta)^2 so the row keeps meaningful mass a
            couple of expected steps ahead.
        delta: expected index advance per step; the RBF is centered on
            j + delta.
        epsilon: relative weight of the off-support floor, as a fraction
            of the row's largest in-support weight. Only the backwards
            and periodic families use it.
        backwards_literal: selects the alternative reading of the
            backwards family in which the RBF covers i <= j (moving the
            alignment strictly backwards) instead of i >= j with a floor
            behind. Off by default.
    """

    family: str
    sigma: float | None = None
    delta: float = 1.0
    epsilon: float = 1e-6
    backwards_literal: bool = False

    def __post_init__(self):
        if self.family not in KERNEL_FAMILIES:
            raise InvalidArgumentError(
                f"unknown kernel family {self.family!r}, expected one of {KERNEL_FAMILIES}"
            )
        if not (np.isfinite(self.delta) and self.delta > 0):
            raise InvalidArgumentError(f"delta must be positive, got {self.delta}")
        if self.sigma is None:
            object.__setattr__(self, "sigma", (2.0 * float(self.delta)) ** 2)
        if not (np.isfinite(self.sigma) and self.sigma > 0):
            raise InvalidArgumentError(f"sigma must be positive and finite, got {self.sigma}")
        if not (np.isfinite(self.epsilon) and 0 <= self.epsilon < 1):
            raise InvalidArgumentError(f"epsilon must lie in [0, 1), got {self.epsilon}")
        object.__setattr__(self, "sigma", float(self.sigma))
        object.__setattr__(self, "delta", float(self.delta))
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "backwards_literal", bool(self.backwards_literal))


def _index_weights(kernel: TransitionKernel, j: int, F: int) -> np.ndarray:
    # rbf over scalar state indices, one weight per candidate successor i.
    i = np.arange(1, F + 1, dtype=float)
    d2 = (i - (float(j) + kernel.delta)) ** 2
    return np.exp(-d2 / (2.0 * kernel.sigma))


def _row(kernel: TransitionKernel, j: int, F: int) -> np.ndarray:
    """Unnormalized transition weights from 1-based state j to states 1..F."""
    fam = kernel.family
    w = np.zeros(F)
    idx = np.arange(1, F + 1)
    if fam == "gradient_predict":
        mask = idx >= j
        w[mask] = _index_weights(kernel, j, F)[mask]
    elif fam == "stable_forward":
        if j == F:
            w[F - 1] = 1.0
        else:
            mask = idx > j
            w[mask] = _index_weights(kernel, j, F)[mask]
    elif fam == "backwards":
        if kernel.backwards_literal:
            mask = idx <= j
        else:
            mask = idx >= j
        w[mask] = _index_weights(kernel, j, F)[mask]
        top = w.max()
        w[~mask] = kernel.epsilon * top
    else:  # periodic
        mask = idx > j
        w[mask] = _index_weights(kernel, j, F)[mask]
        if j == F:
            w[0] = 1.0
        top = w.max()
        floor = ~mask
        if j == F:
            floor = floor & (idx != 1)
        w[floor] = kernel.epsilon * top
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        # All in-support weights underflowed; keep the row a distribution by
        # collapsing onto the nearest legal successor.
        fallback = {
            "gradient_predict": j,
            "stable_forward": min(j + 1, F),
            "backwards": j if not kernel.backwards_literal else max(j - 1, 1),
            "periodic": 1 if j == F else j + 1,
        }[fam]
        log.warning("transition row underflow: family=%s j=%d F=%d", fam, j, F)
        w = np.zeros(F)
        w[fallback - 1] = 1.0
        return w
    return w / total


@lru_cache(maxsize=512)
def _matrix_cached(kernel: TransitionKernel, F: int) -> np.ndarray:
    rows = np.stack([_row(kernel, j, F) for j in range(1, F + 1)])
    rows.setflags(write=False)
    return rows


def transition_matrix(kernel: TransitionKernel, F: int) -> np.ndarray:
    """(F, F) stochastic matrix, entry [j-1, i-1] = P(next = i | current = j).

    Rows each sum to one. The array is cached and read-only.
    """
    if F < 1:
        raise InvalidArgumentError(f"F must be at least 1, got {F}")
    return _matrix_cached(kernel, F)


def transition_row(kernel: TransitionKernel, j: int, F: int) -> np.ndarray:
    """Transition distribution out of 1-based state j over 1..F."""
    if not 1 <= j <= F:
        raise InvalidArgumentError(f"state index {j} outside 1..{F}")
    return transition_matrix(kernel, F)[j - 1]


def log_emissions(x, mean: MeanTrajectory) -> np.ndarray:
    """Log Gaussian density of observation x under each of the F states."""
    x = np.asarray(x, dtype=float)
    if x.shape != (mean.dim,):
        raise InvalidArgumentError(f"observation shape {x.shape} != ({mean.dim},)")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("observation contains non-finite values")
    diff = mean.states - x
    maha = np.einsum("fd,dc,fc->f", diff, mean.cov_inv, diff)
    const = mean.dim * math.log(2.0 * math.pi) + mean.cov_log_det
    return -0.5 * (const + maha)


def emission(x, mean: MeanTrajectory, i: int) -> float:
    """Gaussian density of x under 1-based mean state i.

    May underflow to zero far from the mean; alignment internals use
    ``log_emissions`` instead.
    """
    if not 1 <= i <= mean.n_states:
        raise InvalidArgumentError(f"state index {i} outside 1..{mean.n_states}")
    x = np.asarray(x, dtype=float)
    if x.shape != (mean.dim,):
        raise InvalidArgumentError(f"observation shape {x.shape} != ({mean.dim},)")
    diff = mean.states[i - 1] - x
    maha = float(diff @ mean.cov_inv @ diff)
    const = mean.dim * math.log(2.0 * math.pi) + mean.cov_log_det
    return math.exp(-0.5 * (const + maha))


@dataclass(frozen=True)
class AlignmentState:
    """Forward-algorithm state after some number of observations.

    Attributes:
        scaled_joint: (F,) joint over hidden states rescaled to sum to 1;
            this equals the filtering posterior.
        log_marginal: accumulated log likelihood of all observations so far.
        step_count: number of observations folded in.
        degenerate: True when the latest update had to fall back to a
            floor distribution because every path weight underflowed.
    """

    scaled_joint: np.ndarray
    log_marginal: float
    step_count: int
    degenerate: bool = False

    def __post_init__(self):
        arr = np.asarray(self.scaled_joint, dtype=float)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise InvalidArgumentError(f"scaled_joint must be (F,), got shape {arr.shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0):
            raise InvalidArgumentError("scaled_joint must be finite and non-negative")
        if abs(float(arr.sum()) - 1.0) > 1e-9:
            raise InvalidArgumentError("scaled_joint must sum to 1")
        out = np.array(arr, copy=True)
        out.setflags(write=False)
        object.__setattr__(self, "scaled_joint", out)
        object.__setattr__(self, "log_marginal", float(self.log_marginal))
        if not math.isfinite(self.log_marginal):
            raise InvalidArgumentError("log_marginal must be finite")
        if self.step_count < 1:
            raise InvalidArgumentError("step_count starts at 1 (the first observation)")

    @property
    def n_states(self) -> int:
        return self.scaled_joint.shape[0]

    @property
    def mode(self) -> int:
        """1-based index of the most likely hidden state."""
        return int(np.argmax(self.scaled_joint)) + 1


def init_alignment(mean: MeanTrajectory, kernel: TransitionKernel, x_first) -> AlignmentState:
    """Fold in the first observation under a uniform prior over states.

    The kernel does not enter the math at this step (no transition has
    happened yet); it is accepted so call sites hold one handle per
    cluster-kernel pair.
    """
    del kernel
    F = mean.n_states
    lq = log_emissions(x_first, mean)
    shift = float(lq.max())
    if not math.isfinite(shift):
        # Observation so remote every emission underflowed: keep the
        # uniform prior and charge the smallest representable mass.
        log.warning("alignment init underflow")
        return AlignmentState(
            scaled_joint=np.full(F, 1.0 / F),
            log_marginal=math.log(_TINY) - math.log(F),
            step_count=1,
            degenerate=True,
        )
    w = np.exp(lq - shift)
    total = float(w.sum())
    joint = w / total
    return AlignmentState(
        scaled_joint=joint,
        log_marginal=shift + math.log(total) - math.log(F),
        step_count=1,
    )


def forward_update(
    state: AlignmentState, x_new, mean: MeanTrajectory, kernel: TransitionKernel
) -> AlignmentState:
    """One forward-algorithm step: propagate through the kernel, weight by
    the new observation's emission, rescale.

    The per-step scale factor is absorbed into ``log_marginal``, keeping
    ``scaled_joint`` a unit-sum distribution regardless of sequence length.
    Emission weighting happens in log space shifted by the largest
    in-support log emission, so distant observations reduce the log
    marginal instead of flushing the joint to zero.
    """
    F = mean.n_states
    if state.n_states != F:
        raise InvalidArgumentError(
            f"alignment state has {state.n_states} states, mean has {F}"
        )
    T = transition_matrix(kernel, F)
    predicted = T.T @ state.scaled_joint
    lq = log_emissions(x_new, mean)
    support = predicted > 0.0
    degenerate = False
    if not np.any(support):
        # Unreachable for properly normalized kernels; guard anyway.
        support = np.ones(F, dtype=bool)
        predicted = np.full(F, 1.0 / F)
        degenerate = True
    shift = float(lq[support].max())
    w = np.zeros(F)
    with np.errstate(invalid="ignore"):  # shift may be -inf when all emissions underflow
        w[support] = np.exp(lq[support] - shift) * predicted[support]
    total = float(w.sum())
    if not np.isfinite(total) or total <= 0.0:
        # Every surviving path underflowed even after shifting; floor at a
        # uniform distribution over the kernel-legal successors and charge
        # the smallest representable mass to the marginal. The shift is
        # dropped here: it is -inf/nan in this branch, and log_marginal
        # must stay finite for cross-cluster comparisons.
        joint = support / float(support.sum())
        log_inc = math.log(_TINY)
        degenerate = True
        log.warning("forward update underflow at step %d", state.step_count + 1)
    else:
        joint = w / total
        log_inc = shift + math.log(total)
    return AlignmentState(
        scaled_joint=joint,
        log_marginal=state.log_marginal + log_inc,
        step_count=state.step_count + 1,
        degenerate=degenerate,
    )


def posterior(state: AlignmentState) -> np.ndarray:
    """Filtering posterior over hidden states; sums to one."""
    return state.scaled_joint


def predict_next(post: np.ndarray, kernel: TransitionKernel) -> np.ndarray:
    """Distribution over the next hidden state given the current posterior.

    Prediction always uses the gradient_predict family: the controller
    needs a geometric look-ahead that can also hold still, independent of
    which family filters the observations. A kernel from another family
    is re-interpreted with its shape parameters kept.
    """
    post = np.asarray(post, dtype=float)
    if post.ndim != 1 or post.shape[0] < 1:
        raise InvalidArgumentError(f"posterior must be (F,), got shape {post.shape}")
    if not np.all(np.isfinite(post)) or np.any(post < 0):
        raise InvalidArgumentError("posterior must be finite and non-negative")
    if abs(float(post.sum()) - 1.0) > 1e-6:
        raise InvalidArgumentError("posterior must sum to 1")
    if kernel.family != "gradient_predict":
        kernel = TransitionKernel(
            "gradient_predict", kernel.sigma, kernel.delta, kernel.epsilon
        )
    return transition_matrix(kernel, post.shape[0]).T @ post


def log_marginal(state: AlignmentState) -> float:
    """Accumulated log likelihood of the observations under this mean."""
    return state.log_marginal
