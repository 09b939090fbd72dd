"""Steps-to-threshold versus batch size, and the critical batch size.

Measures K(b), the number of steps until the loss first drops below a
threshold, over a grid of batch sizes.  Larger batches need fewer steps,
but each step costs b gradient evaluations, so the total oracle work K*b
trades off; the fitted model locates the batch size minimizing it.
"""

import numpy as np

from spdsgd import (
    FitInputs,
    RunConfig,
    StepSchedule,
    SweepConfig,
    check_monotone_convex,
    critical_batch,
    exp_map,
    fit_model,
    gradient_variance,
    loss,
    reference_centroid,
    run,
    sweep,
)
from spdsgd.dataio import generate_synthetic

rng = np.random.default_rng(42)
data = generate_synthetic(rng, n=256, dim=5, center=np.eye(5), spread=0.5)
star = reference_centroid(data, tol=1e-9)
f_star = loss(star, data)
x0 = exp_map(np.eye(5), (0.25 / np.sqrt(5.0)) * np.eye(5))
gap = loss(x0, data) - f_star

# Threshold on the excess-loss scale: a quarter of the initial gap.
eps = f_star + 0.25 * gap
alpha = 0.005
schedule = StepSchedule.constant(alpha)
batches = (4, 8, 16, 32, 64, 128)

print("sweeping batch sizes", batches, "with 5 seeds each...")
record = sweep(
    SweepConfig(
        data=data, x0=x0, schedules=(schedule,), epsilons=(eps,),
        batch_sizes=batches, seeds=(0, 1, 2, 3, 4), max_steps=20_000,
    )
)

points = [(b, mean) for b, mean, _, _ in record.aggregate(schedule.label, eps)]
print(f"\n{'batch':>6s} {'mean K':>8s} {'K*b':>8s}")
for b, k in points:
    print(f"{b:6d} {k:8.1f} {k * b:8.0f}")

report = check_monotone_convex(points)
print(f"\nSpearman rank correlation of (b, K): {report.spearman_steps:.3f}")
print(f"min second difference of K*b on the log grid: {report.min_second_diff_sfo:.0f}")

# Fit the closed-form K(b) model and locate the critical batch size.
probe = run(RunConfig(data, x0, schedule, 32, 0, 20_000, epsilons=(eps,)))
inputs = FitInputs(
    sigma2=gradient_variance(x0, data),
    grad_bound=probe.grad_norm_max,
    alpha=alpha,
    eps=0.25 * gap,
)
fit = fit_model("constant", points, inputs)
fit = critical_batch(fit, (float(batches[0]), float(batches[-1])))
print(f"\nfitted constants: C1={fit.c1:.4f} C2={fit.c2:.4f} "
      f"(log-space residual {fit.residual_norm:.3f})")
where = "boundary of the grid" if fit.critical_at_boundary else "interior"
print(f"critical batch size on the grid: {fit.critical_numeric:.2f} ({where})")
print(f"derivative-consistent closed form: {fit.critical_closed_form:.2f}")
