"""Learn a mean motion from noisy demonstrations and follow it.

Fits a single-cluster model to the snake dataset, then rolls the
controller out from a point well off the curve: the agent first homes
onto the demonstrated path, then traverses it to the endpoint.
"""

import matplotlib.pyplot as plt
import numpy as np

from calm import ControllerConfig, TransitionKernel, fit, generate_dataset, rollout

dataset = generate_dataset("snake", seed=2)
model = fit(dataset, k=1)
mean = model.means[0]

cfg = ControllerConfig.from_means(model.means)
start = np.array([3.4, 3.1])
result = rollout(model, start, TransitionKernel("stable_forward"), cfg)
path = result.trajectory.states

print(f"fit: F={mean.n_states} states, spacing {mean.spacing:.3f}")
print(f"rollout: {result.n_ticks} ticks, converged={result.converged}")
print(f"final distance to endpoint: {np.linalg.norm(path[-1] - mean.states[-1]):.4f}")

fig, ax = plt.subplots(figsize=(7, 4))
for demo in dataset.demos:
    ax.plot(demo.states[:, 0], demo.states[:, 1], color="0.8", lw=0.8)
ax.plot(mean.states[:, 0], mean.states[:, 1], color="tab:blue", lw=2.5, label="learned mean")
ax.plot(path[:, 0], path[:, 1], color="tab:red", lw=1.2, label="rollout")
ax.plot(*start, "o", color="tab:red", ms=6)
ax.plot(*mean.states[-1], "*", color="black", ms=12, label="endpoint")
ax.set_title("demonstrations, learned mean, and a rollout from off-curve")
ax.legend(loc="lower right", fontsize=8)
fig.tight_layout()
fig.savefig("learn_and_follow.png", dpi=130)
print("wrote learn_and_follow.png")
