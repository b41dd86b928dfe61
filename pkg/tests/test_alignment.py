"""Alignment engine: kernels, emissions, scaled forward updates.

The forward algorithm is checked against a brute-force enumeration of
every hidden-state path, with transition rows and emissions re-derived
from their closed forms rather than taken from the implementation.
"""

import itertools
import math

import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import multivariate_normal

from calm import (
    AlignmentState,
    InvalidArgumentError,
    KERNEL_FAMILIES,
    MeanTrajectory,
    TransitionKernel,
    emission,
    forward_update,
    init_alignment,
    log_marginal,
    posterior,
    predict_next,
    rbf,
    transition_matrix,
    transition_row,
)


# -- oracles ------------------------------------------------------------------


def oracle_phi(i, center, sigma):
    return math.exp(-((i - center) ** 2) / (2.0 * sigma))


def oracle_row(kernel, j, F):
    """Transition row from the closed-form branch definitions (1-based j)."""
    row = np.zeros(F)
    for i in range(1, F + 1):
        phi = oracle_phi(i, j + kernel.delta, kernel.sigma)
        if kernel.family == "gradient_predict":
            row[i - 1] = phi if i >= j else 0.0
        elif kernel.family == "stable_forward":
            if i > j:
                row[i - 1] = phi
            elif i == j == F:
                row[i - 1] = 1.0
        elif kernel.family == "backwards":
            if kernel.backwards_literal:
                row[i - 1] = phi if i <= j else 0.0
            else:
                row[i - 1] = phi if i >= j else 0.0
        elif kernel.family == "periodic":
            if i > j:
                row[i - 1] = phi
            elif j == F and i == 1:
                row[i - 1] = 1.0
    if kernel.family in ("backwards", "periodic"):
        floor = kernel.epsilon * row.max()
        row = np.where(row == 0.0, floor, row)
    return row / row.sum()


def random_mean(rng, F, d=2):
    states = rng.normal(size=(F, d))
    a = rng.normal(size=(d, d))
    cov = a @ a.T + np.eye(d) * 0.5
    return MeanTrajectory(states, 0.1, rng.uniform(0.1, 2.0, size=F), cov)


def enumerate_forward(xs, mean, kernel):
    """Unscaled joint alpha_k(i) and marginal by summing over all paths."""
    F = mean.n_states
    k = len(xs)
    q = np.array(
        [
            [multivariate_normal.pdf(x, mean.states[i], mean.emission_cov) for i in range(F)]
            for x in xs
        ]
    )
    T = np.array([oracle_row(kernel, j, F) for j in range(1, F + 1)])
    alpha = np.zeros(F)
    for path in itertools.product(range(F), repeat=k):
        p = (1.0 / F) * q[0][path[0]]
        for t in range(1, k):
            p *= T[path[t - 1], path[t]] * q[t][path[t]]
        alpha[path[-1]] += p
    return alpha


def run_forward(xs, mean, kernel):
    state = init_alignment(mean, kernel, xs[0])
    for x in xs[1:]:
        state = forward_update(state, x, mean, kernel)
    return state


# -- TransitionKernel / transition_row ---------------------------------------


def test_kernel_families_registry():
    assert set(KERNEL_FAMILIES) == {
        "gradient_predict",
        "stable_forward",
        "backwards",
        "periodic",
    }


def test_kernel_validation():
    with pytest.raises(InvalidArgumentError):
        TransitionKernel("nope")
    with pytest.raises(InvalidArgumentError):
        TransitionKernel("stable_forward", sigma=0.0)
    with pytest.raises(InvalidArgumentError):
        TransitionKernel("stable_forward", delta=-1.0)
    with pytest.raises(InvalidArgumentError):
        TransitionKernel("periodic", epsilon=-0.1)
    TransitionKernel("periodic", epsilon=0.0)  # zero floor is legal


def test_default_sigma_follows_delta():
    assert TransitionKernel("stable_forward").sigma == 4.0
    assert TransitionKernel("stable_forward", delta=2.0).sigma == pytest.approx(16.0)


def test_row_stable_forward_absorbing():
    k = TransitionKernel("stable_forward")
    np.testing.assert_allclose(transition_row(k, 3, 3), [0.0, 0.0, 1.0])


def test_row_stable_forward_worked_example():
    k = TransitionKernel("stable_forward", sigma=1.0, delta=1.0)
    row = transition_row(k, 1, 3)
    np.testing.assert_allclose(row, [0.0, 0.6225, 0.3775], atol=1e-4)


def test_row_periodic_wrap():
    k = TransitionKernel("periodic", epsilon=0.0)
    np.testing.assert_allclose(transition_row(k, 4, 4), [1.0, 0.0, 0.0, 0.0])


def test_rows_sum_to_one_all_families():
    rng = np.random.default_rng(0)
    for _ in range(50):
        family = str(rng.choice(KERNEL_FAMILIES))
        k = TransitionKernel(
            family,
            sigma=float(rng.uniform(0.2, 10)),
            delta=float(rng.uniform(0.2, 3)),
            epsilon=float(rng.uniform(0, 1e-3)),
        )
        F = int(rng.integers(1, 9))
        for j in range(1, F + 1):
            assert abs(transition_row(k, j, F).sum() - 1.0) <= 1e-12


def test_structural_masks():
    rng = np.random.default_rng(1)
    for _ in range(20):
        sigma = float(rng.uniform(0.5, 8))
        delta = float(rng.uniform(0.5, 2))
        F = int(rng.integers(2, 8))
        stable = transition_matrix(TransitionKernel("stable_forward", sigma=sigma, delta=delta), F)
        for j in range(1, F + 1):
            for i in range(1, F + 1):
                if i <= j and not (i == j == F):
                    assert stable[j - 1, i - 1] == 0.0
        grad = transition_matrix(TransitionKernel("gradient_predict", sigma=sigma, delta=delta), F)
        assert np.all(grad[np.tril_indices(F, k=-1)] == 0.0)
        assert np.all(np.diag(grad) > 0.0)
        back = transition_matrix(
            TransitionKernel("backwards", sigma=sigma, delta=delta, epsilon=1e-6), F
        )
        per = transition_matrix(
            TransitionKernel("periodic", sigma=sigma, delta=delta, epsilon=1e-6), F
        )
        assert np.all(back > 0.0) and np.all(per > 0.0)


def test_rows_match_oracle_all_families():
    rng = np.random.default_rng(2)
    for _ in range(30):
        family = str(rng.choice(KERNEL_FAMILIES))
        k = TransitionKernel(
            family,
            sigma=float(rng.uniform(0.5, 6)),
            delta=float(rng.uniform(0.5, 2)),
            epsilon=1e-6,
            backwards_literal=bool(rng.integers(0, 2)),
        )
        F = int(rng.integers(2, 7))
        for j in range(1, F + 1):
            np.testing.assert_allclose(
                transition_row(k, j, F), oracle_row(k, j, F), rtol=1e-12, atol=1e-300
            )


def test_backwards_literal_reading_puts_mass_below_diagonal():
    k = TransitionKernel("backwards", sigma=2.0, delta=1.0, backwards_literal=True)
    row = transition_row(k, 4, 5)
    # literal branch: phi on i <= j, floor above; within i <= j the RBF
    # centered at j+delta peaks at i=j itself
    assert np.argmax(row) == 3
    assert row[4] == pytest.approx(k.epsilon * row[3], rel=1e-12)
    assert row[0] < row[1] < row[2] < row[3]


def test_row_index_validation():
    k = TransitionKernel("stable_forward")
    with pytest.raises(InvalidArgumentError):
        transition_row(k, 0, 3)
    with pytest.raises(InvalidArgumentError):
        transition_row(k, 4, 3)


def test_zero_row_floors_to_min_legal_successor():
    # stable_forward at j=F-1 with a collapsed sigma: phi underflows for
    # every i > j, so all mass must land on the minimum legal successor.
    k = TransitionKernel("stable_forward", sigma=1e-4, delta=50.0)
    row = transition_row(k, 2, 3)
    np.testing.assert_allclose(row, [0.0, 0.0, 1.0])


# -- rbf ----------------------------------------------------------------------


def test_rbf_zero_distance():
    assert rbf(np.array([1.0, 2.0]), np.array([1.0, 2.0]), 3.0) == 1.0


def test_rbf_scale_substitution():
    for sigma in (0.5, 1.0, 4.0):
        a = np.zeros(2)
        b = np.array([math.sqrt(2 * sigma), 0.0])
        assert rbf(a, b, sigma) == pytest.approx(math.exp(-1.0))


def test_rbf_divides_by_two_sigma_not_squared():
    a, b = np.zeros(1), np.ones(1)
    assert rbf(a, b, 2.0) == pytest.approx(math.exp(-1.0 / 4.0))


def test_rbf_monotone_in_distance():
    rng = np.random.default_rng(3)
    for _ in range(100):
        a = rng.normal(size=2)
        b = rng.normal(size=2)
        c = rng.normal(size=2)
        sigma = float(rng.uniform(0.1, 5))
        da, db = np.linalg.norm(a - c), np.linalg.norm(b - c)
        near, far = (a, b) if da < db else (b, a)
        assert rbf(near, c, sigma) >= rbf(far, c, sigma)


def test_rbf_validation():
    with pytest.raises(InvalidArgumentError):
        rbf(np.zeros(2), np.zeros(2), 0.0)


# -- emission -----------------------------------------------------------------


def fixed_mean():
    states = np.array([[0.0, 0.0], [2.0, 0.0], [4.0, 0.0]])
    return MeanTrajectory(states, 0.1, [1.0, 1.0, 1.0], np.eye(2))


def test_emission_peak_identity_cov():
    m = fixed_mean()
    assert emission(m.states[0], m, 1) == pytest.approx(1.0 / (2 * math.pi))


def test_emission_unit_mahalanobis():
    m = fixed_mean()
    x = m.states[1] + np.array([1.0, 1.0])  # squared distance 2
    assert emission(x, m, 2) == pytest.approx(math.exp(-1.0) / (2 * math.pi))


def test_emission_integrates_to_one_1d():
    m = MeanTrajectory([[0.0], [1.0]], 0.1, [1.0, 1.0], [[0.3]])
    xs = np.linspace(-6, 6, 4001)
    vals = [emission(np.array([x]), m, 1) for x in xs]
    assert trapezoid(vals, xs) == pytest.approx(1.0, abs=1e-3)


def test_emission_matches_scipy_anisotropic():
    rng = np.random.default_rng(4)
    for _ in range(20):
        m = random_mean(rng, F=int(rng.integers(1, 5)), d=2)
        x = rng.normal(size=2)
        i = int(rng.integers(1, m.n_states + 1))
        expected = multivariate_normal.pdf(x, m.states[i - 1], m.emission_cov)
        assert emission(x, m, i) == pytest.approx(expected, rel=1e-10)


def test_emission_index_validation():
    m = fixed_mean()
    with pytest.raises(InvalidArgumentError):
        emission(np.zeros(2), m, 0)
    with pytest.raises(InvalidArgumentError):
        emission(np.zeros(2), m, 4)
    with pytest.raises(InvalidArgumentError):
        emission(np.zeros(3), m, 1)


# -- init_alignment -----------------------------------------------------------


def test_init_nearest_state_dominates():
    m = fixed_mean()
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, m.states[0])
    assert state.mode == 1
    assert state.step_count == 1


def test_init_equidistant_split():
    states = np.array([[0.0, 0.0], [10.0, 1.0], [10.0, -1.0], [20.0, 0.0]])
    m = MeanTrajectory(states, 0.1, np.ones(4), np.eye(2))
    state = init_alignment(m, TransitionKernel("stable_forward"), np.array([10.0, 0.0]))
    p = posterior(state)
    assert abs(p[1] - p[2]) <= 1e-9
    assert p[1] + p[2] > 0.99


def test_init_posterior_sums_to_one():
    rng = np.random.default_rng(5)
    for _ in range(10):
        m = random_mean(rng, F=int(rng.integers(1, 6)))
        state = init_alignment(m, TransitionKernel("gradient_predict"), rng.normal(size=2))
        assert posterior(state).sum() == pytest.approx(1.0, abs=1e-9)


def test_init_log_marginal_is_mean_emission():
    m = fixed_mean()
    x = np.array([1.0, 0.5])
    state = init_alignment(m, TransitionKernel("stable_forward"), x)
    expected = math.log(np.mean([emission(x, m, i) for i in (1, 2, 3)]))
    assert log_marginal(state) == pytest.approx(expected, rel=1e-12)


# -- forward_update -----------------------------------------------------------


def test_forward_single_state_mean():
    m = MeanTrajectory([[0.0, 0.0]], 0.1, [0.0], np.eye(2))
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, np.array([0.3, 0.0]))
    for step in range(4):
        x = np.array([0.1 * step, 0.0])
        before = log_marginal(state)
        state = forward_update(state, x, m, k)
        np.testing.assert_array_equal(posterior(state), [1.0])
        assert log_marginal(state) - before == pytest.approx(
            math.log(emission(x, m, 1)), rel=1e-12
        )


def test_forward_matches_path_enumeration_all_families():
    rng = np.random.default_rng(6)
    for trial in range(24):
        F = int(rng.integers(2, 6))
        steps = int(rng.integers(2, 6))
        family = KERNEL_FAMILIES[trial % 4]
        kernel = TransitionKernel(
            family,
            sigma=float(rng.uniform(0.5, 5)),
            delta=float(rng.uniform(0.5, 2)),
            epsilon=1e-6,
        )
        mean = random_mean(rng, F)
        xs = [rng.normal(size=2) for _ in range(steps)]
        state = run_forward(xs, mean, kernel)
        alpha = enumerate_forward(xs, mean, kernel)
        recovered = math.exp(log_marginal(state)) * posterior(state)
        np.testing.assert_allclose(recovered, alpha, rtol=1e-10, atol=1e-300)
        assert log_marginal(state) == pytest.approx(math.log(alpha.sum()), abs=1e-8)


def test_forward_support_monotone_stable():
    rng = np.random.default_rng(7)
    m = random_mean(rng, 5)
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, rng.normal(size=2))
    for step in range(2, 9):
        state = forward_update(state, rng.normal(size=2), m, k)
        support_min = int(np.flatnonzero(posterior(state) > 0)[0]) + 1
        assert support_min >= min(step, 5)


def test_forward_absorption_at_final_state():
    rng = np.random.default_rng(8)
    m = random_mean(rng, 4)
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, rng.normal(size=2))
    for _ in range(6):
        state = forward_update(state, rng.normal(size=2), m, k)
    expected = np.zeros(4)
    expected[-1] = 1.0
    np.testing.assert_array_equal(posterior(state), expected)


def test_forward_post_absorption_increment_is_final_emission():
    rng = np.random.default_rng(9)
    m = random_mean(rng, 3)
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, rng.normal(size=2))
    for _ in range(4):
        state = forward_update(state, rng.normal(size=2), m, k)
    for _ in range(3):
        x = rng.normal(size=2)
        before = log_marginal(state)
        state = forward_update(state, x, m, k)
        assert log_marginal(state) - before == pytest.approx(
            math.log(emission(x, m, 3)), abs=1e-10
        )


def test_forward_underflow_floors_to_legal_successors():
    m = fixed_mean()
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, m.states[0])
    bad = np.array([1e200, 1e200])  # overflows the mahalanobis form
    out = forward_update(state, bad, m, k)
    assert out.degenerate
    assert math.isfinite(log_marginal(out))
    legal = transition_matrix(k, 3).T @ posterior(state) > 0
    p = posterior(out)
    np.testing.assert_allclose(p[legal], 1.0 / legal.sum())
    assert np.all(p[~legal] == 0.0)


def test_forward_state_size_mismatch():
    m = fixed_mean()
    k = TransitionKernel("stable_forward")
    state = init_alignment(m, k, m.states[0])
    other = MeanTrajectory([[0.0, 0.0], [1.0, 0.0]], 0.1, [1.0, 1.0], np.eye(2))
    with pytest.raises(InvalidArgumentError):
        forward_update(state, np.zeros(2), other, k)


# -- predict_next -------------------------------------------------------------


def test_predict_one_hot_returns_row():
    k = TransitionKernel("gradient_predict", sigma=2.0, delta=1.0)
    F = 5
    for j in range(1, F + 1):
        p = np.zeros(F)
        p[j - 1] = 1.0
        np.testing.assert_allclose(predict_next(p, k), transition_row(k, j, F), rtol=1e-12)


def test_predict_final_state_stays():
    k = TransitionKernel("gradient_predict", sigma=2.0)
    p = np.zeros(4)
    p[-1] = 1.0
    out = predict_next(p, k)
    np.testing.assert_allclose(out, p)


def test_predict_matches_matrix_product():
    rng = np.random.default_rng(10)
    k = TransitionKernel("gradient_predict", sigma=3.0, delta=1.5)
    for _ in range(20):
        F = int(rng.integers(2, 8))
        p = rng.uniform(0.01, 1, size=F)
        p /= p.sum()
        T = transition_matrix(k, F)
        np.testing.assert_allclose(predict_next(p, k), T.T @ p, rtol=1e-12)


def test_predict_coerces_family_to_gradient_predict():
    stable = TransitionKernel("stable_forward", sigma=3.0, delta=1.5)
    grad = TransitionKernel("gradient_predict", sigma=3.0, delta=1.5)
    p = np.full(4, 0.25)
    np.testing.assert_allclose(predict_next(p, stable), predict_next(p, grad))


def test_predict_validates_distribution():
    k = TransitionKernel("gradient_predict")
    with pytest.raises(InvalidArgumentError):
        predict_next(np.array([0.5, 0.2]), k)


# -- log_marginal comparisons -------------------------------------------------


def test_tracked_mean_beats_distant_mean():
    rng = np.random.default_rng(11)
    near = random_mean(rng, 4)
    far = MeanTrajectory(
        near.states + 50.0, near.dt, near.speeds, near.emission_cov
    )
    k = TransitionKernel("stable_forward")
    xs = [near.states[i] + rng.normal(scale=0.05, size=2) for i in range(4)]
    sn = run_forward(xs, near, k)
    sf = run_forward(xs, far, k)
    assert log_marginal(sn) > log_marginal(sf)
