"""Drag the agent into the other motion's corridor and it switches.

Two overlapping demonstrated motions are clustered apart, then a
rollout started on cluster 0 is dragged onto cluster 1's path. The
per-cluster alignment marginals cross, the controller hands control to
the other cluster, and the agent finishes at the other endpoint.
"""

import matplotlib.pyplot as plt
import numpy as np

from calm import (
    ControllerConfig,
    PerturbationEvent,
    fit,
    generate_dataset,
    TransitionKernel,
    rollout,
)

dataset = generate_dataset("multi_motion", seed=0)
model = fit(dataset, k=2)
m0, m1 = model.means
cfg = ControllerConfig.from_means(model.means)
kernel = TransitionKernel("stable_forward")

# drag: a burst of absolute position commands tracing along cluster 1
anchor = int(0.65 * m1.n_states)
events = tuple(
    PerturbationEvent(
        trigger_tick=t,
        mode="set_position",
        vector=m1.states[min(anchor + (t - 5), m1.n_states - 1)],
    )
    for t in range(5, 21)
)

start = m0.states[0] + np.array([0.05, 0.05])
dragged = rollout(model, start, kernel, cfg, perturbations=events)
active = dragged.active_cluster_trace

flip = int(np.argmax(active == 1)) if (active == 1).any() else -1
print(f"active cluster flipped at tick {flip}")
print(f"converged={dragged.converged}, final active cluster {active[-1]}")
end = dragged.trajectory.states[-1]
print(f"distance to cluster-1 endpoint: {np.linalg.norm(end - m1.states[-1]):.4f}")

fig, ax = plt.subplots(figsize=(7, 4))
ax.plot(m0.states[:, 0], m0.states[:, 1], color="tab:blue", lw=2.5, label="cluster 0")
ax.plot(m1.states[:, 0], m1.states[:, 1], color="tab:green", lw=2.5, label="cluster 1")
p = dragged.trajectory.states
# color the rollout by whichever cluster was in charge at each tick
for c, color in ((0, "tab:red"), (1, "tab:orange")):
    mask = active == c
    ax.plot(p[mask, 0], p[mask, 1], ".", color=color, ms=3,
            label=f"rollout while active={c}")
ax.plot(*m1.states[-1], "*", color="black", ms=12)
ax.set_title("drag onto the other motion hands over control")
ax.legend(loc="lower left", fontsize=8)
fig.tight_layout()
fig.savefig("cluster_switching.png", dpi=130)
print("wrote cluster_switching.png")
