"""Follow a self-crossing figure through its intersection twice.

A position-only controller gets stuck where a path crosses itself: both
branches look equally good. Alignment fixes that — the posterior knows
how far along the motion the agent is, so the predicted next states pull
it through the crossing in the demonstrated order, once per visit.
"""

import matplotlib.pyplot as plt
import numpy as np

from calm import (
    ControllerConfig,
    OVERLAP_CROSSING,
    fit,
    generate_dataset,
    TransitionKernel,
    overlap_heading_check,
    rollout,
)

dataset = generate_dataset("overlap", seed=1)
model = fit(dataset, k=1)
mean = model.means[0]
cfg = ControllerConfig.from_means(model.means)

result = rollout(model, mean.states[0], TransitionKernel("stable_forward"), cfg)
check = overlap_heading_check(result.trajectory, OVERLAP_CROSSING, radius=0.35)
print(f"crossing passes: {check.n_passes}, headings opposed: {check.passed}")
print(f"converged={result.converged} in {result.n_ticks} ticks")

p = result.trajectory.states
cx, cy = OVERLAP_CROSSING
fig, ax = plt.subplots(figsize=(6, 5))
ax.plot(mean.states[:, 0], mean.states[:, 1], color="0.7", lw=4, label="mean")
ax.plot(p[:, 0], p[:, 1], color="tab:red", lw=1.2, label="rollout")
# arrows showing the heading on each pass through the crossing ball
inside = np.linalg.norm(p - np.array([cx, cy]), axis=1) <= 0.35
for i in np.flatnonzero(inside[:-1])[::4]:
    d = p[i + 1] - p[i]
    ax.annotate("", xy=p[i] + 6 * d, xytext=p[i],
                arrowprops=dict(arrowstyle="->", color="black"))
ax.add_patch(plt.Circle((cx, cy), 0.35, fill=False, ls="--", color="0.4"))
ax.set_title("two passes through the self-crossing, demonstrated order")
ax.legend(loc="upper left", fontsize=8)
ax.set_aspect("equal")
fig.tight_layout()
fig.savefig("self_crossing.png", dpi=130)
print("wrote self_crossing.png")
