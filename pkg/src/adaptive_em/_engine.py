"""Vectorized lockstep kernels behind the Monte Carlo estimators.

Each kernel advances a batch of independent paths in lockstep, retiring
lanes as they reach the horizon.  All Gaussian draws go through the same
keyed counters as the sequential classes (BrownianPath, simulate_adaptive,
interpolate), and every floating-point expression mirrors the sequential
code, so a batched run reproduces the per-sample results bit for bit.
In particular Brownian increments are always formed as a difference of
materialized knot values, never as the raw scaled normal.
"""

from __future__ import annotations

import numpy as np

from .brownian import keyed_normals, path_key, time_bits
from .solver import RunawaySimulationError, StepSizeParams, step_size_from_distance

_U1 = np.uint64(1)


def _drift(problem, x):
    return np.asarray(problem.drift(x), dtype=float)


def _diffusion(problem, x):
    return np.asarray(problem.diffusion(x), dtype=float)


def _budget(problem, params):
    return int(10.0 * problem.horizon / params.delta_sq) + 1


def _sample_name(labels, lane):
    return f"sample {labels[lane]}" if labels is not None else f"lane {lane}"


def _check_finite(x, act=None, labels=None):
    ok = np.isfinite(x)
    if ok.all():
        return
    if x.ndim > 1:
        ok = ok.all(axis=tuple(range(1, x.ndim)))
    lane = int(np.flatnonzero(~ok)[0])
    if act is not None:
        lane = int(act[lane])
    raise ValueError(f"non-finite state during simulation in {_sample_name(labels, lane)}")


def _raise_budget(labels, act, budget, params):
    lane = int(act[0])
    raise RunawaySimulationError(
        f"{_sample_name(labels, lane)} exceeded {budget} steps at delta={params.delta:.4g}"
    )


def forward_pass(problem, params: StepSizeParams, keys, labels=None):
    """Adaptive scheme on fresh paths, recording every knot.

    Returns a dict with per-lane step counts ``n``, the interpolated state
    and path value at the horizon (``x_T``, ``w_T``), the knot arrays
    ``kt``/``kw`` with row lengths ``length``, and the continued draw
    counter ``kc``.
    """
    n = keys.size
    d = problem.dimension
    horizon = problem.horizon
    budget = _budget(problem, params)
    t = np.zeros(n)
    x_cur = np.tile(problem.x0, (n, 1))
    w_cur = np.zeros((n, d))
    kc = np.ones(n, dtype=np.uint64)
    length = np.ones(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    cap = 256
    kt = np.zeros((n, cap))
    kw = np.zeros((n, cap, d))
    x_T = np.empty((n, d))
    w_T = np.empty((n, d))
    alive = np.ones(n, dtype=bool)
    dist = np.asarray(problem.surface.distance(x_cur), dtype=float)
    while True:
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        if int(steps[act].max()) + 1 > budget:
            _raise_budget(labels, act, budget, params)
        if int(length[act].max()) + 2 >= cap:
            grow = cap
            kt = np.concatenate([kt, np.zeros((n, grow))], axis=1)
            kw = np.concatenate([kw, np.zeros((n, grow, d))], axis=1)
            cap += grow
        x = x_cur[act]
        tc = t[act]
        wc = w_cur[act]
        h = step_size_from_distance(dist[act], params)
        t_next = tc + h
        z = keyed_normals(keys[act], kc[act], time_bits(t_next), d)
        wn = wc + np.sqrt(t_next - tc)[:, None] * z
        dw = wn - wc
        mu = _drift(problem, x)
        sig = _diffusion(problem, x)
        xn = x + mu * h[:, None] + np.einsum("bij,bj->bi", sig, dw)
        _check_finite(xn, act, labels)
        kc[act] += _U1
        kt[act, length[act]] = t_next
        kw[act, length[act]] = wn
        length[act] += 1
        steps[act] += 1
        crossed = t_next >= horizon
        if crossed.any():
            sub = act[crossed]
            exact = t_next[crossed] == horizon
            if exact.any():
                se = sub[exact]
                x_T[se] = xn[crossed][exact]
                w_T[se] = wn[crossed][exact]
            if (~exact).any():
                sb = sub[~exact]
                s_t = tc[crossed][~exact]
                s_w = wc[crossed][~exact]
                u_t = t_next[crossed][~exact]
                u_w = wn[crossed][~exact]
                frac = (horizon - s_t) / (u_t - s_t)
                mean = s_w + frac[:, None] * (u_w - s_w)
                var = frac * (u_t - horizon)
                z_T = keyed_normals(
                    keys[sb], kc[sb], time_bits(np.full(sb.size, horizon)), d
                )
                wt = mean + np.sqrt(var)[:, None] * z_T
                kc[sb] += _U1
                # shift the overshooting knot right and slot the horizon in
                p = length[sb]
                kt[sb, p] = kt[sb, p - 1]
                kw[sb, p] = kw[sb, p - 1]
                kt[sb, p - 1] = horizon
                kw[sb, p - 1] = wt
                length[sb] += 1
                w_T[sb] = wt
                xb = x[crossed][~exact]
                mu_b = mu[crossed][~exact]
                sig_b = sig[crossed][~exact]
                x_T[sb] = (
                    xb
                    + mu_b * (horizon - s_t)[:, None]
                    + np.einsum("bij,bj->bi", sig_b, wt - s_w)
                )
            alive[sub] = False
        live = ~crossed
        if live.any():
            upd = act[live]
            t[upd] = t_next[live]
            x_cur[upd] = xn[live]
            w_cur[upd] = wn[live]
            dist[upd] = np.asarray(
                problem.surface.distance(xn[live]), dtype=float
            )
    return {
        "n": steps,
        "x_T": x_T,
        "w_T": w_T,
        "kt": kt,
        "kw": kw,
        "length": length,
        "kc": kc,
    }


class _KnotWalker:
    """Forward walk over recorded knots for strictly increasing queries.

    Maintains, per lane, the latest known knot at or before the running
    query time and the index of the next recorded knot after it.  A query
    returns the bracketing data and flags exact hits on existing knots.
    """

    def __init__(self, kt, kw, length):
        self.kt = kt
        self.kw = kw
        self.length = length
        self.ptr = np.ones(kt.shape[0], dtype=np.int64)

    def bracket(self, act, t_node, w_node, t_next):
        """Bracket data for querying ``t_next`` from nodes at ``t_node``.

        Returns (left time, left value, right time, right value, has_right)
        where the left side accounts for any recorded knots passed during
        this step.  Arrays are aligned with ``act``.
        """
        pt = t_node.copy()
        pw = w_node.copy()
        ptr = self.ptr
        length = self.length
        guard = np.minimum(ptr[act], length[act] - 1)
        can = (ptr[act] < length[act]) & (self.kt[act, guard] <= t_next)
        while can.any():
            ii = np.flatnonzero(can)
            lanes = act[ii]
            pt[ii] = self.kt[lanes, ptr[lanes]]
            pw[ii] = self.kw[lanes, ptr[lanes]]
            ptr[lanes] += 1
            guard = np.minimum(ptr[lanes], length[lanes] - 1)
            can[ii] = (ptr[lanes] < length[lanes]) & (
                self.kt[lanes, guard] <= t_next[ii]
            )
        guard = np.minimum(ptr[act], length[act] - 1)
        u_t = self.kt[act, guard]
        u_w = self.kw[act, guard]
        has_right = ptr[act] < length[act]
        return pt, pw, u_t, u_w, has_right


def _bridged_values(pt, pw, u_t, u_w, has_right, t_next, keys, kc, dim):
    """Sample path values at ``t_next`` given brackets; no draw on exact hits.

    Returns (values, drew) where ``drew`` marks lanes that consumed a draw.
    """
    exact = pt == t_next
    drew = ~exact
    denom = np.where(has_right, u_t - pt, 1.0)
    frac = (t_next - pt) / denom
    mean = np.where(
        has_right[:, None], pw + frac[:, None] * (u_w - pw), pw
    )
    var = np.where(has_right, frac * (u_t - t_next), t_next - pt)
    wn = pw.copy()
    if drew.any():
        z = keyed_normals(keys[drew], kc[drew], time_bits(t_next[drew]), dim)
        wn[drew] = mean[drew] + np.sqrt(var[drew])[:, None] * z
    return wn, drew


def bridged_pass(problem, params: StepSizeParams, keys, prior, labels=None):
    """Adaptive scheme on paths conditioned on previously recorded knots.

    ``prior`` is the dict returned by :func:`forward_pass` for the same
    keys; its knots (which include the horizon) pin the path, and new times
    are bridged against them.  Returns per-lane step counts and the state
    at the horizon.
    """
    n = keys.size
    d = problem.dimension
    horizon = problem.horizon
    budget = _budget(problem, params)
    kc = prior["kc"].copy()
    w_horizon = prior["w_T"]
    walker = _KnotWalker(prior["kt"], prior["kw"], prior["length"])
    t = np.zeros(n)
    x_cur = np.tile(problem.x0, (n, 1))
    w_cur = np.zeros((n, d))
    steps = np.zeros(n, dtype=np.int64)
    x_T = np.empty((n, d))
    alive = np.ones(n, dtype=bool)
    dist = np.asarray(problem.surface.distance(x_cur), dtype=float)
    while True:
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        if int(steps[act].max()) + 1 > budget:
            _raise_budget(labels, act, budget, params)
        x = x_cur[act]
        tc = t[act]
        wc = w_cur[act]
        h = step_size_from_distance(dist[act], params)
        t_next = tc + h
        pt, pw, u_t, u_w, has_right = walker.bracket(act, tc, wc, t_next)
        wn, drew = _bridged_values(pt, pw, u_t, u_w, has_right, t_next, keys[act], kc[act], d)
        kc[act[drew]] += _U1
        dw = wn - wc
        mu = _drift(problem, x)
        sig = _diffusion(problem, x)
        xn = x + mu * h[:, None] + np.einsum("bij,bj->bi", sig, dw)
        _check_finite(xn, act, labels)
        steps[act] += 1
        crossed = t_next >= horizon
        if crossed.any():
            sub = act[crossed]
            exact = t_next[crossed] == horizon
            if exact.any():
                x_T[sub[exact]] = xn[crossed][exact]
            if (~exact).any():
                sb = sub[~exact]
                s_t = tc[crossed][~exact]
                s_w = wc[crossed][~exact]
                xb = x[crossed][~exact]
                mu_b = mu[crossed][~exact]
                sig_b = sig[crossed][~exact]
                x_T[sb] = (
                    xb
                    + mu_b * (horizon - s_t)[:, None]
                    + np.einsum("bij,bj->bi", sig_b, w_horizon[sb] - s_w)
                )
            alive[sub] = False
        live = ~crossed
        if live.any():
            upd = act[live]
            t[upd] = t_next[live]
            x_cur[upd] = xn[live]
            w_cur[upd] = wn[live]
            dist[upd] = np.asarray(
                problem.surface.distance(xn[live]), dtype=float
            )
    return {"n": steps, "x_T": x_T}


def coupled_pair(problem, delta, indices, master_seed):
    """Coarse (2 delta) then fine (delta) adaptive runs on shared paths.

    Returns (squared differences at the horizon, fine step counts, coarse
    step counts) for the given sample indices.
    """
    idx = np.asarray(indices, dtype=np.uint64)
    keys = path_key(master_seed, idx)
    coarse = StepSizeParams.for_problem(problem, 2.0 * delta)
    fine = StepSizeParams.for_problem(problem, delta)
    prior = forward_pass(problem, coarse, keys, labels=idx)
    out = bridged_pass(problem, fine, keys, prior, labels=idx)
    diff = out["x_T"] - prior["x_T"]
    sq = np.einsum("bj,bj->b", diff, diff)
    return sq, out["n"], prior["n"]


def occupation_pass(problem, params: StepSizeParams, epsilon, keys, labels=None):
    """Time spent by the interpolated scheme within ``epsilon`` of the surface.

    Each step contributes trapezoidal occupancy from its endpoints and
    midpoint; the final step is truncated at the horizon.  Returns the
    per-lane occupation times.
    """
    n = keys.size
    d = problem.dimension
    horizon = problem.horizon
    budget = _budget(problem, params)
    t = np.zeros(n)
    x_cur = np.tile(problem.x0, (n, 1))
    w_cur = np.zeros((n, d))
    kc = np.ones(n, dtype=np.uint64)
    steps = np.zeros(n, dtype=np.int64)
    occ = np.zeros(n)
    alive = np.ones(n, dtype=bool)
    dist = np.asarray(problem.surface.distance(x_cur), dtype=float)
    while True:
        act = np.flatnonzero(alive)
        if act.size == 0:
            break
        if int(steps[act].max()) + 1 > budget:
            _raise_budget(labels, act, budget, params)
        x = x_cur[act]
        tc = t[act]
        wc = w_cur[act]
        in_l = dist[act] < epsilon
        h = step_size_from_distance(dist[act], params)
        t_next = tc + h
        z = keyed_normals(keys[act], kc[act], time_bits(t_next), d)
        wn = wc + np.sqrt(t_next - tc)[:, None] * z
        kc[act] += _U1
        dw = wn - wc
        mu = _drift(problem, x)
        sig = _diffusion(problem, x)
        xn = x + mu * h[:, None] + np.einsum("bij,bj->bi", sig, dw)
        _check_finite(xn, act, labels)
        steps[act] += 1
        crossed = t_next >= horizon
        live = ~crossed
        if live.any():
            sel = np.flatnonzero(live)
            lanes = act[sel]
            tm = tc[sel] + 0.5 * h[sel]
            zm = keyed_normals(keys[lanes], kc[lanes], time_bits(tm), d)
            kc[lanes] += _U1
            frac = (tm - tc[sel]) / (t_next[sel] - tc[sel])
            mean = wc[sel] + frac[:, None] * (wn[sel] - wc[sel])
            var = frac * (t_next[sel] - tm)
            wm = mean + np.sqrt(var)[:, None] * zm
            xm = (
                x[sel]
                + mu[sel] * (tm - tc[sel])[:, None]
                + np.einsum("bij,bj->bi", sig[sel], wm - wc[sel])
            )
            in_m = np.asarray(problem.surface.distance(xm)) < epsilon
            dist_next = np.asarray(problem.surface.distance(xn[sel]), dtype=float)
            in_r = dist_next < epsilon
            occ[lanes] += h[sel] * (in_l[sel] + 2.0 * in_m + in_r) * 0.25
            t[lanes] = t_next[sel]
            x_cur[lanes] = xn[sel]
            w_cur[lanes] = wn[sel]
            dist[lanes] = dist_next
        if crossed.any():
            sel = np.flatnonzero(crossed)
            lanes = act[sel]
            h_T = horizon - tc[sel]
            tm = tc[sel] + 0.5 * h_T
            zm = keyed_normals(keys[lanes], kc[lanes], time_bits(tm), d)
            kc[lanes] += _U1
            frac = (tm - tc[sel]) / (t_next[sel] - tc[sel])
            mean = wc[sel] + frac[:, None] * (wn[sel] - wc[sel])
            var = frac * (t_next[sel] - tm)
            wm = mean + np.sqrt(var)[:, None] * zm
            xm = (
                x[sel]
                + mu[sel] * (tm - tc[sel])[:, None]
                + np.einsum("bij,bj->bi", sig[sel], wm - wc[sel])
            )
            exact = t_next[sel] == horizon
            wt = wn[sel].copy()
            if (~exact).any():
                ii = np.flatnonzero(~exact)
                lb = lanes[ii]
                frac2 = (horizon - tm[ii]) / (t_next[sel][ii] - tm[ii])
                mean2 = wm[ii] + frac2[:, None] * (wn[sel][ii] - wm[ii])
                var2 = frac2 * (t_next[sel][ii] - horizon)
                z_T = keyed_normals(
                    keys[lb], kc[lb], time_bits(np.full(lb.size, horizon)), d
                )
                wt[ii] = mean2 + np.sqrt(var2)[:, None] * z_T
                kc[lb] += _U1
            xt = (
                x[sel]
                + mu[sel] * h_T[:, None]
                + np.einsum("bij,bj->bi", sig[sel], wt - wc[sel])
            )
            in_m = np.asarray(problem.surface.distance(xm)) < epsilon
            in_t = np.asarray(problem.surface.distance(xt)) < epsilon
            occ[lanes] += h_T * (in_l[sel] + 2.0 * in_m + in_t) * 0.25
            alive[lanes] = False
    return occ


def equidistant_transformed_pass(transform, z0, horizon, n_steps, keys, prior, labels=None):
    """Uniform-grid Euler run of the transformed scalar equation.

    Starts from the transformed initial value ``z0``, shares the Brownian
    paths recorded in ``prior`` (whose knots include the horizon), and
    returns the transformed state at the horizon for every lane.
    """
    n = keys.size
    kc = prior["kc"].copy()
    walker = _KnotWalker(prior["kt"], prior["kw"], prior["length"])
    act = np.arange(n)
    dt = horizon / n_steps
    t = np.zeros(n)
    w_cur = np.zeros((n, 1))
    z_cur = np.full(n, z0)
    for k in range(n_steps):
        tk1 = horizon if k == n_steps - 1 else (k + 1) * dt
        t_next = np.full(n, tk1)
        pt, pw, u_t, u_w, has_right = walker.bracket(act, t, w_cur, t_next)
        wn, drew = _bridged_values(
            pt, pw, u_t, u_w, has_right, t_next, keys, kc, 1
        )
        kc[drew] += _U1
        mu_g, sig_g = transform.transformed_coeffs(z_cur)
        h = t_next - t
        dw = wn[:, 0] - w_cur[:, 0]
        z_cur = z_cur + mu_g * h + sig_g * dw
        _check_finite(z_cur, None, labels)
        t = t_next
        w_cur = wn
    return z_cur
