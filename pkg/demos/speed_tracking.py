"""The commanded speed follows the demonstrated speed profile.

While the agent is on the path, the speed command is the alignment
posterior's average of the per-state demonstrated speeds, so slow
demonstrated segments are replayed slowly and fast ones fast. Off the
path the blend leans on the fixed recovery gain instead.
"""

import matplotlib.pyplot as plt
import numpy as np

from calm import ControllerConfig, TransitionKernel, fit, generate_dataset, rollout

dataset = generate_dataset("snake", seed=2)
model = fit(dataset, k=1)
mean = model.means[0]
cfg = ControllerConfig.from_means(model.means)

result = rollout(model, mean.states[0], TransitionKernel("stable_forward"), cfg)

# demonstrated speed at the aligned state, per tick
phase_idx = np.round(result.phase_trace * (mean.n_states - 1)).astype(int)
demo_speed = mean.speeds[phase_idx]

print(f"speeds span {mean.speeds.min():.2f}..{mean.speeds.max():.2f}")
err = np.abs(result.kv_trace[5:-5] - demo_speed[5:-5])
print(f"median |kv - demonstrated speed| mid-rollout: {np.median(err):.3f}")

fig, ax = plt.subplots(figsize=(7, 3.5))
ax.plot(result.kv_trace, color="tab:red", lw=1.5, label="commanded speed")
ax.plot(demo_speed, color="tab:blue", lw=1.0, ls="--",
        label="demonstrated speed at aligned state")
ax.set_xlabel("tick")
ax.set_ylabel("speed")
ax.set_title("speed command tracks the demonstrated profile")
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig("speed_tracking.png", dpi=130)
print("wrote speed_tracking.png")
