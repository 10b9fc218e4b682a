"""Monte Carlo estimators for the adaptive scheme.

The quantities of interest are per-step-size rows of coupled mean-square
differences (the scheme at delta against the scheme at 2*delta on the same
Brownian path, compared at the horizon), expected step counts, and optional
occupation times near the discontinuity surface.

Samples are simulated in fixed-size batches by the vectorized kernels in
``_engine``; because every Gaussian draw is keyed by (sample index, knot
counter, time bits), results do not depend on how samples are split across
batches or worker processes.  Reductions always run over arrays ordered by
sample index, so repeated runs with the same seed are bit-identical.  The
sequential single-sample functions in this module are the reference
implementations the batched kernels are tested against.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import repeat
from typing import Union

import numpy as np

from . import _engine
from .brownian import BrownianPath
from .problems import get_example
from .solver import (
    SdeProblem,
    StepSizeParams,
    em_step,
    interpolate,
    simulate_adaptive,
    step_size,
)
from .transform1d import Transform1D

_BATCH = 512


@dataclass(frozen=True)
class ExperimentConfig:
    """Inputs of one coupled-difference experiment.

    Args:
        problem: an SdeProblem, or the name of a registered example.
        deltas: step-size parameters, each in (0, 0.5) so the coarse run
            at twice the value stays admissible.
        samples: number of Monte Carlo samples per delta (at least 2).
        master_seed: seed from which every per-sample stream is derived.
        occupation_epsilons: tube half-widths for optional occupation rows.
    """

    problem: Union[SdeProblem, str]
    deltas: tuple = ()
    samples: int = 2
    master_seed: int = 0
    occupation_epsilons: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(float(d) for d in self.deltas))
        object.__setattr__(
            self, "occupation_epsilons", tuple(float(e) for e in self.occupation_epsilons)
        )
        if not self.deltas:
            raise ValueError("need at least one delta")
        for d in self.deltas:
            if not 0.0 < d < 0.5:
                raise ValueError(f"delta {d} outside (0, 0.5)")
        if any(b >= a for a, b in zip(self.deltas, self.deltas[1:])):
            raise ValueError("deltas must be strictly decreasing")
        for e in self.occupation_epsilons:
            if e <= 0.0:
                raise ValueError(f"occupation epsilon {e} must be positive")
        if self.samples < 2:
            raise ValueError("need at least 2 samples for standard errors")

    def resolve_problem(self) -> SdeProblem:
        if isinstance(self.problem, str):
            return get_example(self.problem).problem
        return self.problem


@dataclass
class MonteCarloReport:
    """Per-delta estimate rows plus run metadata."""

    rows: list = field(default_factory=list)
    samples: int = 0
    master_seed: int = 0
    wall_time: float = 0.0

    _CSV_COLUMNS = ("delta", "msq", "msq_stderr", "cost_mean", "cost_stderr")

    def to_csv(self, stream) -> None:
        """Write the pinned estimate columns; floats use repr for exactness."""
        stream.write(",".join(self._CSV_COLUMNS) + "\n")
        for row in self.rows:
            stream.write(",".join(repr(float(row[c])) for c in self._CSV_COLUMNS) + "\n")

    def to_json_dict(self) -> dict:
        return {
            "samples": self.samples,
            "master_seed": self.master_seed,
            "wall_time": self.wall_time,
            "rows": self.rows,
        }


def coupled_difference_sample(problem, delta, sample_index, master_seed):
    """One coupled sample via the sequential path classes.

    Runs the scheme at 2*delta and at delta on the same Brownian path and
    compares the interpolated states at the horizon.  Returns the squared
    difference and the two step counts (fine, coarse).
    """
    path = BrownianPath(problem.dimension, master_seed, sample_index)
    coarse = StepSizeParams.for_problem(problem, 2.0 * delta)
    fine = StepSizeParams.for_problem(problem, delta)
    traj_c = simulate_adaptive(problem, coarse, path)
    x_c = interpolate(traj_c, problem, path, problem.horizon)
    traj_f = simulate_adaptive(problem, fine, path)
    x_f = interpolate(traj_f, problem, path, problem.horizon)
    diff = x_f - x_c
    # einsum, not @: BLAS dot may fuse multiply-adds and drift a bit from
    # the batched kernel's reduction
    return float(np.einsum("j,j->", diff, diff)), traj_f.step_count, traj_c.step_count


def occupation_sample(problem, params, epsilon, sample_index, master_seed):
    """Occupation time of one sequential run within the epsilon-tube.

    Each step contributes a trapezoidal weight from the indicator at its
    endpoints and midpoint; the final step is truncated at the horizon.
    """
    surface = problem.surface
    path = BrownianPath(problem.dimension, master_seed, sample_index)
    horizon = problem.horizon
    t = 0.0
    x = problem.x0.copy()
    w = path.query(0.0)
    occ = 0.0
    while t < horizon:
        in_l = float(surface.distance(x)) < epsilon
        h = step_size(x, params, surface)
        t_next = t + h
        w_next = path.query(t_next)
        mu = np.asarray(problem.drift(x), dtype=float)
        sig = np.asarray(problem.diffusion(x), dtype=float)
        x_next = em_step(x, mu, sig, h, w_next - w)
        if t_next < horizon:
            tm = t + 0.5 * h
            wm = path.query(tm)
            xm = em_step(x, mu, sig, tm - t, wm - w)
            in_m = float(surface.distance(xm)) < epsilon
            in_r = float(surface.distance(x_next)) < epsilon
            occ += h * (in_l + 2.0 * in_m + in_r) * 0.25
            t, x, w = t_next, x_next, w_next
        else:
            h_t = horizon - t
            tm = t + 0.5 * h_t
            wm = path.query(tm)
            wt = path.query(horizon)
            xm = em_step(x, mu, sig, tm - t, wm - w)
            xt = em_step(x, mu, sig, h_t, wt - w)
            in_m = float(surface.distance(xm)) < epsilon
            in_t = float(surface.distance(xt)) < epsilon
            occ += h_t * (in_l + 2.0 * in_m + in_t) * 0.25
            break
    return occ


def equidistant_steps(problem, params) -> int:
    """Grid length matching the finest adaptive resolution, ceil(T/delta^2)."""
    return int(math.ceil(problem.horizon / params.delta_sq))


def verify_transform_sample(problem, transform, delta, sample_index, master_seed):
    """Squared gap between the adaptive state and the transformed benchmark.

    One path: run the adaptive scheme at delta, then an equidistant Euler
    run of the transformed equation on a grid of ceil(T/delta^2) steps, and
    compare at the horizon after mapping the benchmark back through the
    inverse transform.
    """
    if problem.dimension != 1:
        raise ValueError("transform verification requires a one-dimensional problem")
    path = BrownianPath(1, master_seed, sample_index)
    params = StepSizeParams.for_problem(problem, delta)
    traj = simulate_adaptive(problem, params, path)
    x_T = interpolate(traj, problem, path, problem.horizon)[0]
    n_steps = equidistant_steps(problem, params)
    dt = problem.horizon / n_steps
    z = float(transform.value(problem.x0[0]))
    t = 0.0
    w = float(path.query(0.0)[0])
    for k in range(n_steps):
        t_next = problem.horizon if k == n_steps - 1 else (k + 1) * dt
        w_next = float(path.query(t_next)[0])
        mu_g, sig_g = transform.transformed_coeffs(z)
        z = z + float(mu_g) * (t_next - t) + float(sig_g) * (w_next - w)
        t, w = t_next, w_next
    x_ref = float(transform.inverse(z))
    gap = x_T - x_ref
    return gap * gap


def _coupled_job(payload, start, stop):
    problem, delta, master_seed = payload
    idx = np.arange(start, stop, dtype=np.uint64)
    return _engine.coupled_pair(problem, delta, idx, master_seed)


def _occupation_job(payload, start, stop):
    problem, params, epsilon, master_seed = payload
    idx = np.arange(start, stop, dtype=np.uint64)
    keys = _engine.path_key(master_seed, idx)
    return (_engine.occupation_pass(problem, params, epsilon, keys, labels=idx),)


def _verify_job(payload, start, stop):
    problem, transform, delta, master_seed = payload
    idx = np.arange(start, stop, dtype=np.uint64)
    keys = _engine.path_key(master_seed, idx)
    params = StepSizeParams.for_problem(problem, delta)
    prior = _engine.forward_pass(problem, params, keys, labels=idx)
    z0 = float(transform.value(problem.x0[0]))
    z_T = _engine.equidistant_transformed_pass(
        transform, z0, problem.horizon, equidistant_steps(problem, params), keys, prior, labels=idx
    )
    diff = prior["x_T"][:, 0] - transform.inverse(z_T)
    return (diff * diff,)


def _map_batches(job, payload, samples, workers):
    """Run a batch job over [0, samples) and concatenate in index order."""
    spans = [(a, min(a + _BATCH, samples)) for a in range(0, samples, _BATCH)]
    if workers > 1 and len(spans) > 1:
        starts, stops = zip(*spans)
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(job, repeat(payload), starts, stops))
    else:
        parts = [job(payload, a, b) for a, b in spans]
    return [np.concatenate(col) for col in zip(*parts)]


def _mean_stderr(values):
    m = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(values.size))
    return m, se


def run_experiment(config: ExperimentConfig, workers: int = 1) -> MonteCarloReport:
    """Coupled-difference and cost estimates for every configured delta.

    Identical configs give bit-identical rows regardless of ``workers``.
    """
    problem = config.resolve_problem()
    t0 = time.perf_counter()
    rows = []
    for delta in config.deltas:
        sq, n_fine, _ = _map_batches(
            _coupled_job, (problem, delta, config.master_seed), config.samples, workers
        )
        msq, msq_se = _mean_stderr(sq)
        cost, cost_se = _mean_stderr(n_fine.astype(float))
        row = {
            "delta": float(delta),
            "msq": msq,
            "msq_stderr": msq_se,
            "cost_mean": cost,
            "cost_stderr": cost_se,
        }
        if config.occupation_epsilons:
            params = StepSizeParams.for_problem(problem, delta)
            entries = []
            for eps in config.occupation_epsilons:
                (vals,) = _map_batches(
                    _occupation_job,
                    (problem, params, eps, config.master_seed),
                    config.samples,
                    workers,
                )
                mean, se = _mean_stderr(vals)
                entries.append({"epsilon": float(eps), "mean": mean, "stderr": se})
            row["occupation"] = entries
        rows.append(row)
    return MonteCarloReport(
        rows=rows,
        samples=config.samples,
        master_seed=config.master_seed,
        wall_time=time.perf_counter() - t0,
    )


def estimate_msq(config: ExperimentConfig, workers: int = 1):
    """Rows of (delta, mean squared coupled difference, standard error)."""
    report = run_experiment(config, workers)
    return [(r["delta"], r["msq"], r["msq_stderr"]) for r in report.rows]


def estimate_cost(config: ExperimentConfig, workers: int = 1):
    """Rows of (delta, mean step count of the fine run, standard error)."""
    report = run_experiment(config, workers)
    return [(r["delta"], r["cost_mean"], r["cost_stderr"]) for r in report.rows]


def occupation_values(problem, params, epsilon, samples, master_seed, workers=1):
    """Per-sample occupation times near the surface, in index order.

    ``epsilon`` must stay below eps0/2 so the tube sits well inside the
    region where the problem's bounds were derived.
    """
    if not 0.0 < epsilon < 0.5 * problem.eps0:
        raise ValueError(f"epsilon {epsilon} outside (0, eps0/2)")
    (vals,) = _map_batches(
        _occupation_job, (problem, params, epsilon, master_seed), samples, workers
    )
    return vals


def occupation_estimate(problem, params, epsilon, samples, master_seed, workers=1):
    """Mean occupation time of the epsilon-tube around the surface."""
    return float(np.mean(occupation_values(problem, params, epsilon, samples, master_seed, workers)))


def verify_transform(problem, transform: Transform1D, deltas, samples, master_seed, workers=1):
    """Mean squared benchmark gap per delta.

    For each delta, compares the adaptive scheme against an equidistant
    Euler run of the transformed equation mapped back to original
    coordinates.  Returns a list of dict rows with keys ``delta``,
    ``mean_sq`` and ``stderr``.
    """
    if problem.dimension != 1:
        raise ValueError("transform verification requires a one-dimensional problem")
    rows = []
    for delta in deltas:
        (vals,) = _map_batches(
            _verify_job, (problem, transform, float(delta), master_seed), samples, workers
        )
        mean, se = _mean_stderr(vals)
        rows.append({"delta": float(delta), "mean_sq": mean, "stderr": se})
    return rows
