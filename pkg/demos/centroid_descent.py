"""Stochastic descent to the Riemannian centroid under three step schedules.

Builds a synthetic cloud of SPD matrices, solves for the exact centroid with
the full-gradient oracle, then runs mini-batch descent with constant,
1/sqrt(k+1), and staircase step sizes and prints how the excess loss decays.
"""

import numpy as np

from spdsgd import (
    RunConfig,
    StepSchedule,
    exp_map,
    gradient_variance,
    loss,
    reference_centroid,
    run,
)
from spdsgd.dataio import generate_synthetic

rng = np.random.default_rng(42)
data = generate_synthetic(rng, n=256, dim=5, center=np.eye(5), spread=0.5)
star = reference_centroid(data, tol=1e-9)
f_star = loss(star, data)
print(f"dataset: {data.n} SPD matrices of dimension {data.dim}")
print(f"oracle centroid loss f* = {f_star:.6f}")

x0 = exp_map(np.eye(5), 0.3 * np.eye(5))
print(f"start point loss f(x0) = {loss(x0, data):.6f}")
print(f"single-sample gradient variance at x0: {gradient_variance(x0, data):.3f}")

schedules = [
    StepSchedule.constant(0.005),
    StepSchedule.inverse_sqrt(),
    StepSchedule.staircase(0.005, gamma=0.5, period=200, max_stage=4),
]

print(f"\n{'schedule':>24s} | excess loss f(x_k) - f* at step k")
marks = [0, 10, 100, 1000, 3000]
print(f"{'':>24s} | " + "  ".join(f"k={k:<5d}" for k in marks))
for schedule in schedules:
    record = run(
        RunConfig(
            data=data, x0=x0, schedule=schedule, batch_size=32,
            seed=7, max_steps=3000,
        )
    )
    row = "  ".join(f"{record.f[k] - f_star:7.1e}" for k in marks)
    print(f"{schedule.label:>24s} | {row}")

print("\nconstant steps plateau at a noise floor set by step size and batch")
print("size; diminishing schedules keep shrinking it.")
for b in (8, 32, 128):
    record = run(
        RunConfig(data=data, x0=x0, schedule=StepSchedule.constant(0.005),
                  batch_size=b, seed=7, max_steps=3000)
    )
    floor = record.f[-1000:].mean() - f_star
    print(f"  batch {b:3d}: constant-step floor {floor:.2e}")
