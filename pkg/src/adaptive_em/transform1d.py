"""Scalar jump-removal transform for piecewise Lipschitz drifts.

Around each drift breakpoint the state is bent by a localized quartic bump
whose strength is chosen so that, after the change of variables, the Ito
correction cancels the drift jump exactly.  The transformed equation then
has Lipschitz coefficients and classical Euler-Maruyama theory applies to
it, which is what makes the transform useful as an accuracy reference for
the adaptive scheme on the original equation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np


class DegenerateDiffusionError(ValueError):
    """The diffusion vanishes at a breakpoint, so no jump strength exists."""


class RootFindError(RuntimeError):
    """Inverting the transform did not converge."""


@dataclass(frozen=True)
class PiecewiseDrift1D:
    """Drift given by Lipschitz branches between increasing breakpoints.

    ``branches`` holds one callable more than ``breakpoints``; branch ``i``
    applies on ``[breakpoints[i-1], breakpoints[i])``, so the drift is
    right-continuous at every breakpoint.  One-sided limits default to the
    adjacent branch evaluated at the breakpoint and are cross-checked
    against evaluations just off it.
    """

    breakpoints: tuple
    branches: tuple
    left_limits: Optional[tuple] = None
    right_limits: Optional[tuple] = None

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if any(not math.isfinite(b) for b in bp):
            raise ValueError("breakpoints must be finite")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise ValueError("breakpoints must be strictly increasing")
        if len(self.branches) != len(bp) + 1:
            raise ValueError("need exactly one branch more than breakpoints")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "branches", tuple(self.branches))
        left = self.left_limits
        right = self.right_limits
        if left is None:
            left = tuple(float(self.branches[i](b)) for i, b in enumerate(bp))
        if right is None:
            right = tuple(float(self.branches[i + 1](b)) for i, b in enumerate(bp))
        left, right = tuple(map(float, left)), tuple(map(float, right))
        if len(left) != len(bp) or len(right) != len(bp):
            raise ValueError("one-sided limits must match the breakpoints")
        for i, b in enumerate(bp):
            if abs(float(self.branches[i](b - 1e-8)) - left[i]) > 1e-6:
                raise ValueError(f"left limit at breakpoint {b} is inconsistent")
            if abs(float(self.branches[i + 1](b + 1e-8)) - right[i]) > 1e-6:
                raise ValueError(f"right limit at breakpoint {b} is inconsistent")
        object.__setattr__(self, "left_limits", left)
        object.__setattr__(self, "right_limits", right)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if not self.breakpoints:
            return self.branches[0](x)
        bp = self.breakpoints
        conds = [x < bp[0]]
        conds += [(a <= x) & (x < b) for a, b in zip(bp, bp[1:])]
        conds.append(x >= bp[-1])
        return np.piecewise(x, conds, list(self.branches))


def alpha(drift: PiecewiseDrift1D, sigma: Callable, xi) -> float:
    """Jump strength at breakpoint ``xi`` for unit upward normal.

    Half the drift jump (left limit minus right limit) divided by the squared
    diffusion at the breakpoint.
    """
    xi = float(xi)
    try:
        i = drift.breakpoints.index(xi)
    except ValueError:
        raise ValueError(f"{xi} is not a breakpoint of the drift") from None
    sig = float(sigma(xi))
    if sig == 0.0:
        raise DegenerateDiffusionError(f"diffusion vanishes at breakpoint {xi}")
    return (drift.left_limits[i] - drift.right_limits[i]) / (2.0 * sig * sig)


def bump(u):
    """Quartic bump ``(1+u)^4 (1-u)^4`` on [-1, 1], zero outside.

    Has three vanishing derivatives at the support edges.
    """
    u = np.asarray(u, dtype=float)
    inside = np.abs(u) <= 1.0
    # powers spelled out as products so scalar and batched evaluations agree
    q = (1.0 + u) * (1.0 - u)
    q2 = q * q
    return np.where(inside, q2 * q2, 0.0)


def _psi(s, c):
    # s |s| bump(|s|/c), the odd profile multiplying the jump strength
    return s * np.abs(s) * bump(np.abs(s) / c)


def _psi_prime(s, c):
    q = s / c
    v = q * q
    w = 1.0 - v
    inside = v < 1.0
    val = 2.0 * np.abs(s) * (w * w * w) * (1.0 - 5.0 * v)
    return np.where(inside, val, 0.0)


def _psi_second(s, c):
    # odd in s; the convention at s = 0 is the right-hand branch
    q = s / c
    v = q * q
    w = 1.0 - v
    inside = v < 1.0
    sign = np.where(np.asarray(s, dtype=float) >= 0.0, 1.0, -1.0)
    val = sign * 2.0 * (w * w) * (1.0 - 22.0 * v + 45.0 * v * v)
    return np.where(inside, val, 0.0)


@dataclass(frozen=True)
class TransformParams:
    """Bump radius of the transform."""

    c: float

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0):
            raise ValueError("bump radius must be positive")


class Transform1D:
    """Bijective change of variables removing the drift jumps.

    Args:
        drift: piecewise drift whose jumps are to be removed.
        sigma: scalar diffusion coefficient, vectorized over states.
        eps0: tube radius of the underlying problem; the bump radius stays
            strictly below it.
        params: optional explicit bump radius.  When omitted the radius
            starts at half of ``min(eps0, half minimum gap)`` and is halved
            until the derivative stays above 0.1 on a 2001-point grid per
            bump interval.
    """

    def __init__(
        self,
        drift: PiecewiseDrift1D,
        sigma: Callable,
        eps0: float,
        params: Optional[TransformParams] = None,
    ):
        if not (math.isfinite(eps0) and eps0 > 0):
            raise ValueError("eps0 must be positive")
        self.drift = drift
        self.sigma = sigma
        self.eps0 = float(eps0)
        self._bp = np.asarray(drift.breakpoints, dtype=float)
        self._alphas = np.asarray(
            [alpha(drift, sigma, b) for b in drift.breakpoints], dtype=float
        )
        gaps = np.diff(self._bp)
        half_gap = float(gaps.min()) / 2.0 if gaps.size else math.inf
        if params is None:
            c = min(self.eps0, half_gap) / 2.0
            for _ in range(80):
                if self._derivative_floor_ok(c):
                    break
                c /= 2.0
            else:
                raise ValueError("could not find a bump radius with positive slope")
            params = TransformParams(c=c)
        else:
            if params.c >= self.eps0:
                raise ValueError("bump radius must be strictly less than eps0")
            if params.c > half_gap:
                raise ValueError("bump radius exceeds half the minimum gap")
            if not self._derivative_floor_ok(params.c):
                raise ValueError("transform derivative drops below 0.1")
        self.params = params

    def _derivative_floor_ok(self, c: float) -> bool:
        if self._bp.size == 0:
            return True
        s = np.linspace(-c, c, 2001)
        slopes = 1.0 + self._alphas[:, None] * _psi_prime(s, c)[None, :]
        return bool(slopes.min() >= 0.1)

    def _split(self, x):
        # nearest breakpoint index and signed offset from it
        x = np.asarray(x, dtype=float)
        i = np.searchsorted(self._bp, x)
        lo = np.clip(i - 1, 0, self._bp.size - 1)
        hi = np.clip(i, 0, self._bp.size - 1)
        use_hi = np.abs(x - self._bp[hi]) < np.abs(x - self._bp[lo])
        pick = np.where(use_hi, hi, lo)
        return pick, x - self._bp[pick]

    def value(self, x):
        """Forward map; the identity outside the bump intervals."""
        x = np.asarray(x, dtype=float)
        if self._bp.size == 0:
            return x + 0.0
        pick, s = self._split(x)
        c = self.params.c
        out = x + np.where(
            np.abs(s) < c, self._alphas[pick] * _psi(s, c), 0.0
        )
        return out

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self._bp.size == 0:
            return np.ones_like(x)
        pick, s = self._split(x)
        c = self.params.c
        return 1.0 + np.where(
            np.abs(s) < c, self._alphas[pick] * _psi_prime(s, c), 0.0
        )

    def second_derivative(self, x):
        """Piecewise second derivative; right-hand branch at breakpoints."""
        x = np.asarray(x, dtype=float)
        if self._bp.size == 0:
            return np.zeros_like(x)
        pick, s = self._split(x)
        c = self.params.c
        return np.where(
            np.abs(s) < c, self._alphas[pick] * _psi_second(s, c), 0.0
        )

    def inverse(self, z, tol: float = 1e-12, max_iter: int = 200):
        """Invert the forward map to residual ``tol`` by safeguarded Newton.

        Each bump interval maps onto itself, so points outside all bump
        intervals come back unchanged.
        """
        z = np.asarray(z, dtype=float)
        out = z.astype(float).copy()
        if self._bp.size == 0:
            return out
        pick, s = self._split(z)
        c = self.params.c
        mask = np.abs(s) < c
        if not np.any(mask):
            return out
        zz = np.atleast_1d(out)[np.atleast_1d(mask)]
        xi = self._bp[np.atleast_1d(pick)[np.atleast_1d(mask)]]
        a = self._alphas[np.atleast_1d(pick)[np.atleast_1d(mask)]]
        lo = xi - c
        hi = xi + c
        x = zz.copy()
        done = np.zeros(x.shape, dtype=bool)
        for _ in range(max_iter):
            resid = x + a * _psi(x - xi, c) - zz
            done |= np.abs(resid) <= tol
            if done.all():
                break
            # monotone map: the residual sign tells the bracket side
            hi = np.where(~done & (resid > 0.0), np.minimum(hi, x), hi)
            lo = np.where(~done & (resid < 0.0), np.maximum(lo, x), lo)
            slope = 1.0 + a * _psi_prime(x - xi, c)
            cand = x - resid / slope
            bad = ~np.isfinite(cand) | (cand <= lo) | (cand >= hi)
            cand = np.where(bad, 0.5 * (lo + hi), cand)
            x = np.where(done, x, cand)
        else:
            raise RootFindError("transform inversion did not converge")
        flat = np.atleast_1d(out)
        flat[np.atleast_1d(mask)] = x
        return out

    def transformed_coeffs(self, z):
        """Drift and diffusion of the transformed equation at ``z``.

        Returns the pair (drift value, diffusion value), both shaped like
        ``z``.  The drift picks up the Ito correction through the second
        derivative, which is what cancels the jumps.
        """
        x = self.inverse(z)
        gp = self.derivative(x)
        gs = self.second_derivative(x)
        sg = np.asarray(self.sigma(x), dtype=float)
        mu = np.asarray(self.drift(x), dtype=float)
        return gp * mu + 0.5 * sg * sg * gs, gp * sg
