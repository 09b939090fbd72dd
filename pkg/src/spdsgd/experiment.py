"""Batch-size sweep harness and steps-to-threshold models.

A sweep runs the optimizer over a grid of (schedule, batch size, seed) and
records, for each loss threshold, the number of steps ``K`` until the loss
first drops below it, together with the oracle complexity ``K * b``.  The
measured ``K(b)`` curves are then fit against closed-form models:

    constant step:   K = C2 b / (eps b - (sigma2 + G^2 b) alpha C1)
    1/sqrt(k+1):     K = ((2 C1 sigma2 + (2 C1 G^2 + C2) b) / (eps b))^2
    staircase:       constant-step K multiplied by 1 / (alpha gamma^n)

For each fitted model, ``K(b) * b`` is convex in ``b`` and its interior
minimizer is the critical batch size.  The boxed minimizer formulas that
circulate for these models disagree with differentiating them; this module
uses the derivative-consistent forms

    constant/staircase:  b* = 2 C1 sigma2 alpha / (eps - G^2 alpha C1)
    1/sqrt(k+1):         b* = 2 C1 sigma2 / (2 C1 G^2 + C2)

and cross-checks them against a golden-section search on the fitted curve.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy import optimize, stats

from .objective import Dataset
from .rsgd import RunConfig, RunError, StepSchedule, run


class FitDomainError(ValueError):
    """An observed batch size violates the fitted model's domain."""


class FitError(RuntimeError):
    """The two-parameter model fit failed to converge."""


# ---------------------------------------------------------------------------
# Sweep over (schedule, batch size, seed)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    data: Dataset
    x0: np.ndarray
    schedules: tuple[StepSchedule, ...]
    epsilons: tuple[float, ...]
    batch_sizes: tuple[int, ...]
    seeds: tuple[int, ...]
    max_steps: int
    n_jobs: int = 1
    with_replacement: bool = True

    def __post_init__(self):
        object.__setattr__(self, "schedules", tuple(self.schedules))
        object.__setattr__(self, "epsilons", tuple(float(e) for e in self.epsilons))
        object.__setattr__(self, "batch_sizes", tuple(int(b) for b in self.batch_sizes))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.schedules:
            raise ValueError("at least one schedule required")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ValueError("epsilons must be positive")
        if len(set(self.epsilons)) != len(self.epsilons):
            raise ValueError("epsilons must be distinct")
        b = self.batch_sizes
        if not b or any(x < 1 for x in b) or any(p >= q for p, q in zip(b, b[1:])):
            raise ValueError("batch_sizes must be ascending, distinct, positive")
        if len(self.seeds) < 2:
            raise ValueError("at least two seeds required for statistical aggregates")
        if self.max_steps < 1:
            raise ValueError("max_steps must be positive")
        if self.n_jobs < 1:
            raise ValueError("n_jobs must be positive")


@dataclass(frozen=True)
class CellResult:
    """Outcome of one (schedule, epsilon, batch, seed) cell.

    ``steps`` is None when the threshold was not reached within the step
    budget (censored) or when the run errored; errored cells carry the
    message so nothing is silently dropped.
    """

    steps: int | None
    sfo: int | None
    final_f: float
    wall_ms: float
    error: str | None = None

    @property
    def censored(self) -> bool:
        return self.steps is None and self.error is None


CellKey = tuple[str, float, int, int]  # (schedule label, epsilon, batch, seed)


@dataclass(frozen=True)
class SweepRecord:
    config: SweepConfig
    cells: dict[CellKey, CellResult] = field(repr=False)

    def keys_in_grid_order(self) -> list[CellKey]:
        c = self.config
        return [
            (s.label, e, b, seed)
            for s, e, b, seed in product(c.schedules, c.epsilons, c.batch_sizes, c.seeds)
        ]

    def aggregate(self, schedule_label: str, eps: float) -> list[tuple[int, float, float, int]]:
        """Per batch size: (b, mean K, median K, number censored-or-errored).

        Only uncensored cells enter the mean/median; a batch size with no
        uncensored cell reports NaN aggregates.
        """
        out = []
        for b in self.config.batch_sizes:
            ks = []
            bad = 0
            for seed in self.config.seeds:
                cell = self.cells[(schedule_label, eps, b, seed)]
                if cell.steps is None:
                    bad += 1
                else:
                    ks.append(cell.steps)
            if ks:
                out.append((b, float(np.mean(ks)), float(np.median(ks)), bad))
            else:
                out.append((b, np.nan, np.nan, bad))
        return out


def _run_job(config: SweepConfig, schedule: StepSchedule, b: int, seed: int):
    eps_desc = tuple(sorted(config.epsilons, reverse=True))
    run_config = RunConfig(
        data=config.data,
        x0=config.x0,
        schedule=schedule,
        batch_size=b,
        seed=seed,
        max_steps=config.max_steps,
        epsilons=eps_desc,
        with_replacement=config.with_replacement,
    )
    try:
        record = run(run_config)
    except RunError as exc:
        return {
            (schedule.label, e, b, seed): CellResult(None, None, np.nan, 0.0, error=str(exc))
            for e in config.epsilons
        }
    out = {}
    for e in config.epsilons:
        k = record.steps_to_epsilon[e]
        out[(schedule.label, e, b, seed)] = CellResult(
            steps=k,
            sfo=None if k is None else k * b,
            final_f=float(record.f[-1]),
            wall_ms=record.wall_time_s * 1e3,
        )
    return out


def sweep(config: SweepConfig) -> SweepRecord:
    """Run one optimizer trajectory per (schedule, batch, seed) grid point.

    Thresholds share a trajectory: the step count for each epsilon is read
    off the same run, which is exactly what separate runs would measure
    since batch draws are keyed by (seed, step) and do not depend on the
    threshold list.  Cells are assembled in grid order, so the record is
    identical no matter how many jobs execute concurrently.
    """
    jobs = list(product(config.schedules, config.batch_sizes, config.seeds))
    if config.n_jobs == 1:
        results = [_run_job(config, s, b, seed) for s, b, seed in jobs]
    else:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            futures = [pool.submit(_run_job, config, s, b, seed) for s, b, seed in jobs]
            results = [f.result() for f in futures]
    cells: dict[CellKey, CellResult] = {}
    for chunk in results:
        cells.update(chunk)
    ordered = {
        key: cells[key]
        for key in SweepRecord(config, cells).keys_in_grid_order()
    }
    return SweepRecord(config=config, cells=ordered)


# ---------------------------------------------------------------------------
# Monotonicity / convexity diagnostics
# ---------------------------------------------------------------------------


def log_grid_second_differences(batches, values) -> np.ndarray:
    """Discrete second differences of ``values`` on the log-batch grid.

    Scaled so that on a uniform power-of-two grid this reduces to the plain
    second difference ``v[i+1] - 2 v[i] + v[i-1]``.
    """
    x = np.log2(np.asarray(batches, dtype=np.float64))
    v = np.asarray(values, dtype=np.float64)
    if v.size < 3:
        return np.empty(0)
    h = np.diff(x)
    left = (v[1:-1] - v[:-2]) / h[:-1]
    right = (v[2:] - v[1:-1]) / h[1:]
    dd = 2.0 * (right - left) / (h[1:] + h[:-1])
    return dd * float(np.mean(h)) ** 2


@dataclass(frozen=True)
class ConvexityReport:
    spearman_steps: float
    min_second_diff_steps: float
    spearman_sfo: float
    min_second_diff_sfo: float
    steps_nonincreasing: bool
    monotone_pass: bool
    steps_convex_pass: bool
    sfo_convex_pass: bool

    @property
    def passed(self) -> bool:
        return self.monotone_pass and self.steps_convex_pass and self.sfo_convex_pass


def check_monotone_convex(
    points, *, spearman_max: float = -0.9, convexity_frac: float = 0.05
) -> ConvexityReport:
    """Check that measured K(b) decreases and that K and K*b are convex.

    ``points`` is a list of (batch, mean K) in ascending batch order.  The
    monotone check passes when the series is nonincreasing or its Spearman
    rank correlation with b is at most ``spearman_max``; each convexity
    check passes when the minimum second difference on the log-batch grid is
    at least ``-convexity_frac`` times the median of the series.
    """
    points = list(points)
    if len(points) < 3:
        raise ValueError("need at least 3 (batch, K) points")
    b = np.asarray([p[0] for p in points], dtype=np.float64)
    k = np.asarray([p[1] for p in points], dtype=np.float64)
    if np.any(np.diff(b) <= 0):
        raise ValueError("batch sizes must be ascending")
    sfo = k * b

    nonincreasing = bool(np.all(np.diff(k) <= 1e-12 * np.maximum(1.0, np.abs(k[:-1]))))
    if np.all(k == k[0]):
        rho_k = np.nan
    else:
        rho_k = float(stats.spearmanr(b, k).statistic)
    rho_sfo = np.nan if np.all(sfo == sfo[0]) else float(stats.spearmanr(b, sfo).statistic)

    d2_k = log_grid_second_differences(b, k)
    d2_sfo = log_grid_second_differences(b, sfo)
    min_d2_k = float(d2_k.min())
    min_d2_sfo = float(d2_sfo.min())

    monotone_pass = nonincreasing or (not np.isnan(rho_k) and rho_k <= spearman_max)
    k_floor = -convexity_frac * float(np.median(np.abs(k)))
    sfo_floor = -convexity_frac * float(np.median(np.abs(sfo)))
    return ConvexityReport(
        spearman_steps=rho_k,
        min_second_diff_steps=min_d2_k,
        spearman_sfo=rho_sfo,
        min_second_diff_sfo=min_d2_sfo,
        steps_nonincreasing=nonincreasing,
        monotone_pass=monotone_pass,
        steps_convex_pass=min_d2_k >= k_floor,
        sfo_convex_pass=min_d2_sfo >= sfo_floor,
    )


# ---------------------------------------------------------------------------
# K(b) models, fitting, critical batch size
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FitInputs:
    """Problem constants entering the K(b) models."""

    sigma2: float
    grad_bound: float
    alpha: float
    eps: float
    gamma: float | None = None
    max_stage: int | None = None

    def __post_init__(self):
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")
        if self.grad_bound < 0:
            raise ValueError("grad_bound must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass(frozen=True)
class FitResult:
    kind: str
    c1: float
    c2: float
    inputs: FitInputs
    residual_norm: float
    critical_numeric: float | None = None
    critical_closed_form: float | None = None
    critical_at_boundary: bool = False


def _staircase_scale(inputs: FitInputs) -> float:
    if inputs.gamma is None or inputs.max_stage is None:
        raise ValueError("staircase model needs gamma and max_stage")
    return inputs.alpha * inputs.gamma**inputs.max_stage


def model_steps(kind: str, b, c1: float, c2: float, inputs: FitInputs):
    """Predicted steps-to-threshold at batch size(s) ``b`` for a fitted model."""
    b = np.asarray(b, dtype=np.float64)
    if kind in ("constant", "staircase"):
        denom = inputs.eps * b - (inputs.sigma2 + inputs.grad_bound**2 * b) * inputs.alpha * c1
        with np.errstate(divide="ignore", invalid="ignore"):
            k = c2 * b / denom
        k = np.where(denom > 0, k, np.nan)
        if kind == "staircase":
            k = k / _staircase_scale(inputs)
        return k if k.ndim else float(k)
    if kind == "inverse_sqrt":
        num = 2.0 * c1 * inputs.sigma2 + (2.0 * c1 * inputs.grad_bound**2 + c2) * b
        k = (num / (inputs.eps * b)) ** 2
        return k if k.ndim else float(k)
    raise ValueError(f"unknown model kind {kind!r}")


def batch_lower_bound(kind: str, c1: float, inputs: FitInputs) -> float | None:
    """Smallest admissible batch size for the fitted model (None if unrestricted)."""
    if kind in ("constant", "staircase"):
        margin = inputs.eps - inputs.grad_bound**2 * inputs.alpha * c1
        if margin <= 0:
            return np.inf
        return inputs.sigma2 * inputs.alpha * c1 / margin
    return None


def _c1_domain_cap(inputs: FitInputs, b_min: float) -> float:
    # Largest c1 keeping the constant-model denominator positive at b_min.
    return inputs.eps * b_min / (inputs.alpha * (inputs.sigma2 + inputs.grad_bound**2 * b_min))


def _init_constant(bs, ks, inputs: FitInputs, scale: float) -> tuple[float, float]:
    # 1/(K*scale) is affine in 1/b; invert the regression for (c1, c2).
    y = 1.0 / (ks * scale)
    design = np.column_stack([np.ones_like(bs), -1.0 / bs])
    (p, q), *_ = np.linalg.lstsq(design, y, rcond=None)
    cap = _c1_domain_cap(inputs, bs.min())
    if p > 0 and q > 0 and inputs.sigma2 > 0:
        c1 = q * inputs.eps / (inputs.alpha * (p * inputs.sigma2 + q * inputs.grad_bound**2))
        c2 = (inputs.eps - inputs.grad_bound**2 * inputs.alpha * c1) * (1.0 / p)
        if 0 < c1 < cap and c2 > 0:
            return c1, c2
    # Fallback: park c1 mid-domain and solve c2 in closed form (exact log-LS).
    c1 = 0.5 * cap
    denom = inputs.eps * bs - (inputs.sigma2 + inputs.grad_bound**2 * bs) * inputs.alpha * c1
    c2 = float(np.exp(np.mean(np.log(ks * scale) - np.log(bs / denom))))
    return c1, c2


def _init_inverse_sqrt(bs, ks, inputs: FitInputs) -> tuple[float, float]:
    # sqrt(K) is affine in 1/b.
    y = np.sqrt(ks)
    design = np.column_stack([np.ones_like(bs), 1.0 / bs])
    (intercept, slope), *_ = np.linalg.lstsq(design, y, rcond=None)
    if inputs.sigma2 > 0 and slope > 0:
        c1 = slope * inputs.eps / (2.0 * inputs.sigma2)
        c2 = intercept * inputs.eps - 2.0 * c1 * inputs.grad_bound**2
        if c1 > 0 and c2 > 0:
            return c1, c2
    c1 = 1.0
    c2 = max(float(intercept) * inputs.eps - 2.0 * c1 * inputs.grad_bound**2, 1e-12)
    return c1, c2


def fit_model(kind: str, points, inputs: FitInputs) -> FitResult:
    """Least-squares fit of (C1, C2) to measured (batch, K) pairs.

    The objective is the sum of squared log-residuals, so batch sizes whose
    step counts span orders of magnitude contribute evenly.  The fit starts
    from an exact linearization (the models are affine in transformed
    coordinates), then polishes with a bounded simplex search that rejects
    any (C1, C2) violating the model's domain at an observed batch size.
    """
    pts = sorted((float(b), float(k)) for b, k in points)
    if len(pts) < 2:
        raise ValueError("need at least 2 (batch, K) points to fit")
    bs = np.asarray([p[0] for p in pts])
    ks = np.asarray([p[1] for p in pts])
    if np.any(ks <= 0) or np.any(bs <= 0):
        raise ValueError("batch sizes and step counts must be positive")
    if kind == "staircase":
        scale = _staircase_scale(inputs)
    elif kind == "constant":
        scale = 1.0
    elif kind == "inverse_sqrt":
        scale = None
    else:
        raise ValueError(f"unknown model kind {kind!r}")

    log_ks = np.log(ks)

    def residuals(c1: float, c2: float) -> float:
        pred = model_steps(kind, bs, c1, c2, inputs)
        pred = np.asarray(pred)
        if np.any(~np.isfinite(pred)) or np.any(pred <= 0):
            return np.inf
        r = np.log(pred) - log_ks
        return float(r @ r)

    if kind == "inverse_sqrt":
        c1_0, c2_0 = _init_inverse_sqrt(bs, ks, inputs)
    else:
        c1_0, c2_0 = _init_constant(bs, ks, inputs, scale)

    def obj(u):
        return residuals(np.exp(u[0]), np.exp(u[1]))

    u0 = np.log([c1_0, c2_0])
    best_u, best_val = u0, obj(u0)
    res = optimize.minimize(
        obj, u0, method="Nelder-Mead",
        options={"xatol": 1e-14, "fatol": 1e-16, "maxiter": 4000, "maxfev": 8000},
    )
    if not (res.success or np.isfinite(res.fun)):
        raise FitError(f"two-parameter search did not converge: {res.message}")
    if np.isfinite(res.fun) and res.fun < best_val:
        best_u, best_val = res.x, res.fun
    c1, c2 = float(np.exp(best_u[0])), float(np.exp(best_u[1]))

    bound = batch_lower_bound(kind, c1, inputs)
    if bound is not None and bs.min() <= bound:
        raise FitDomainError(
            f"observed batch {bs.min():g} at or below the fitted model's "
            f"domain bound {bound:g}"
        )
    return FitResult(
        kind=kind, c1=c1, c2=c2, inputs=inputs, residual_norm=float(np.sqrt(best_val))
    )


def _golden_section(fn, lo: float, hi: float, rtol: float = 1e-8) -> float:
    invphi = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while (b - a) > rtol * max(abs(a), abs(b)):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return 0.5 * (a + b)


def closed_form_critical_batch(fit: FitResult) -> float | None:
    """Stationary point of the fitted ``K(b) * b``, from its derivative.

    None when the curve has no interior stationary point (e.g. zero gradient
    noise, where complexity grows monotonically in the batch size).
    """
    inp = fit.inputs
    if inp.sigma2 == 0:
        return None
    if fit.kind in ("constant", "staircase"):
        margin = inp.eps - inp.grad_bound**2 * inp.alpha * fit.c1
        if margin <= 0:
            return None
        return 2.0 * fit.c1 * inp.sigma2 * inp.alpha / margin
    if fit.kind == "inverse_sqrt":
        return 2.0 * fit.c1 * inp.sigma2 / (2.0 * fit.c1 * inp.grad_bound**2 + fit.c2)
    raise ValueError(f"unknown model kind {fit.kind!r}")


def critical_batch(fit: FitResult, b_range: tuple[float, float]) -> FitResult:
    """Locate the batch size minimizing fitted ``K(b) * b`` on ``b_range``.

    Returns a copy of ``fit`` carrying the numeric minimizer, the
    derivative-consistent closed form, and a flag set when the minimum sits
    on the range boundary (no interior critical batch on this range).
    """
    lo, hi = float(b_range[0]), float(b_range[1])
    if not (0 < lo < hi):
        raise ValueError("b_range must satisfy 0 < lo < hi")
    bound = batch_lower_bound(fit.kind, fit.c1, fit.inputs)
    if bound is not None and lo <= bound:
        raise FitDomainError(
            f"range start {lo:g} is not above the model's domain bound {bound:g}"
        )

    def sfo(b: float) -> float:
        return float(model_steps(fit.kind, b, fit.c1, fit.c2, fit.inputs)) * b

    b_star = _golden_section(sfo, lo, hi)
    span = hi - lo
    at_boundary = (b_star - lo) <= 1e-5 * span or (hi - b_star) <= 1e-5 * span
    if at_boundary:
        b_star = lo if (b_star - lo) <= (hi - b_star) else hi
    return dataclasses.replace(
        fit,
        critical_numeric=b_star,
        critical_closed_form=closed_form_critical_batch(fit),
        critical_at_boundary=at_boundary,
    )
