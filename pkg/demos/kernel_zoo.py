"""One rollout per transition kernel, same learned model.

The kernel decides which alignment moves are legal, which changes what
the controller can do: gradient_predict and stable_forward both march to
the endpoint, but only stable_forward detects arrival and stops —
under the others a rollout always runs its full tick budget;
backwards re-aligns when the agent is yanked toward the start
instead of insisting the motion only moves forward; periodic wraps from
the last state to the first and keeps lapping a closed curve.
"""

import matplotlib.pyplot as plt
import numpy as np

from calm import (
    ClusterModel,
    ControllerConfig,
    MeanTrajectory,
    PerturbationEvent,
    fit,
    generate_dataset,
    TransitionKernel,
    rollout,
)

dataset = generate_dataset("snake", seed=2)
model = fit(dataset, k=1)
mean = model.means[0]
cfg = ControllerConfig.from_means(model.means)
start = mean.states[0] + np.array([0.1, -0.1])

fig, axes = plt.subplots(2, 2, figsize=(10, 7))

# forward-only kernels: plain rollouts to the endpoint. Only
# stable_forward detects arrival and stops; gradient_predict just runs
# out its tick budget hovering at the end of the motion.
for ax, name in zip(axes[0], ("gradient_predict", "stable_forward")):
    r = rollout(model, start, TransitionKernel(name), cfg)
    p = r.trajectory.states
    end_dist = np.linalg.norm(p[-1] - mean.states[-1])
    ax.plot(mean.states[:, 0], mean.states[:, 1], color="0.75", lw=3)
    ax.plot(p[:, 0], p[:, 1], color="tab:red", lw=1.0)
    ax.plot(*mean.states[-1], "*", color="black", ms=10)
    stop = "stopped on arrival" if r.converged else "ran out the budget"
    ax.set_title(f"{name}: {stop}, ends {end_dist:.2f} out")
    print(f"{name:16s} ticks={r.n_ticks:4d} converged={r.converged} "
          f"end_dist={end_dist:.3f}")

# backwards: teleport the agent back near the start mid-run; the phase
# trace drops (re-alignment to an earlier state) instead of sticking
rewind = (PerturbationEvent(trigger_tick=30, mode="set_position", vector=mean.states[8]),)
r = rollout(model, start, TransitionKernel("backwards"), cfg, perturbations=rewind)
ax = axes[1][0]
ax.plot(r.phase_trace, color="tab:purple", lw=1.2)
ax.axvline(30, color="0.5", ls="--")
ax.set_xlabel("tick")
ax.set_ylabel("alignment phase")
ax.set_title("backwards: phase rewinds after the teleport")
print(f"backwards phase at tick 29: {r.phase_trace[29]:.2f}, "
      f"min over 31..45: {r.phase_trace[31:46].min():.2f}")

# periodic: hand-built circular motion, agent keeps lapping
theta = np.linspace(0.0, 2 * np.pi, 25)[:-1]
circle = MeanTrajectory(
    states=np.stack([np.cos(theta), np.sin(theta)], axis=1),
    dt=0.05,
    speeds=np.ones(24),
    emission_cov=0.05 * np.eye(2),
)
loop_model = ClusterModel(means=(circle,))
loop_cfg = ControllerConfig(
    kv_perturbed=1.0, blend_sigma=circle.spacing**2, control_dt=0.05
)
budget = 5 * int(np.ceil(2 * np.pi / 0.05))
r = rollout(
    loop_model,
    circle.states[0] + np.array([0.02, -0.03]),
    TransitionKernel("periodic"),
    loop_cfg,
    max_ticks=budget,
)
p = r.trajectory.states
ax = axes[1][1]
ax.plot(circle.states[:, 0], circle.states[:, 1], color="0.75", lw=3)
ax.plot(p[:, 0], p[:, 1], color="tab:red", lw=0.6)
ax.set_aspect("equal")
laps = int(np.sum(np.diff(r.phase_trace) < -0.5))
ax.set_title(f"periodic: {laps} wraps in {budget} ticks")
print(f"periodic  wraps={laps}")

fig.tight_layout()
fig.savefig("kernel_zoo.png", dpi=130)
print("wrote kernel_zoo.png")
