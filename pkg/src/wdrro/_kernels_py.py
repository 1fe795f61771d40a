"""Pure numpy implementation of the one-dimensional worst-case kernel.

The kernel computes

    sup  E_Q[ clip(X - lo, 0, hi - lo) ]   over  W_p(Q, P_N) <= delta,

where P_N is uniform on the sorted sample ``xs`` and mass may only move to the
right (moving left never increases the payoff). It returns the value, the
budget multiplier and a transport certificate: point i sends a fraction
``gam[i]`` of its mass to ``pos[i]``.
"""

from __future__ import annotations

import numpy as np

_BISECT_ITERS = 200


def clip_worst_case(xs, lo: float, hi: float, delta: float, p: float):
    xs = np.ascontiguousarray(xs, dtype=float)
    N = xs.shape[0]
    width = hi - lo
    pos = xs.copy()
    gam = np.zeros(N)
    if width <= 0.0:
        return 0.0, 0.0, pos, gam
    base = np.clip(xs - lo, 0.0, width)
    if delta <= 0.0:
        return float(base.mean()), np.inf, pos, gam
    if p == 1.0:
        return _greedy(xs, lo, hi, delta, pos, gam, base)
    return _dual_search(xs, lo, hi, delta, p, pos, gam, base)


def _greedy(xs, lo, hi, delta, pos, gam, base):
    """Order one: spend the budget N*delta on the points closest to ``hi``."""
    N = xs.shape[0]
    width = hi - lo
    budget = N * delta
    gain = 0.0
    lam = 0.0
    i = int(np.searchsorted(xs, hi, side="left")) - 1
    while i >= 0 and budget > 0.0:
        x = xs[i]
        dist = hi - x
        if x >= lo:
            move = min(dist, budget)
            pos[i] = x + move
            gam[i] = 1.0
            gain += move
            budget -= move
            if move < dist or budget <= 0.0:
                lam = 1.0
        else:
            rate = width / dist
            frac = min(1.0, budget / dist)
            pos[i] = hi
            gam[i] = frac
            gain += frac * width
            budget -= frac * dist
            if frac < 1.0 or budget <= 0.0:
                lam = rate
        i -= 1
    return float((base.sum() + gain) / N), lam, pos, gam


def _moves(xs, lo, hi, lam, p, inner, outer):
    """Optimal displacement of each point for a fixed multiplier.

    Returns (step, cost, gain, moving) arrays; ``inner`` flags points in
    [lo, hi) and ``outer`` points below ``lo``.
    """
    tau = (1.0 / (p * lam)) ** (1.0 / (p - 1.0))
    to_hi = hi - xs
    step = np.zeros_like(xs)
    step[inner] = np.minimum(tau, to_hi[inner])
    gap = lo - xs
    # only points below lo use t_out; the clamp at zero keeps the others finite
    t_out = np.maximum(np.clip(tau, gap, to_hi), 0.0)
    val = t_out - gap - lam * t_out ** p
    jump = outer & (val > 0.0)
    step[jump] = t_out[jump]
    moving = inner | jump
    cost = np.where(moving, step ** p, 0.0)
    gain = np.where(inner, step, 0.0) + np.where(jump, t_out - gap, 0.0)
    return step, cost, gain, moving, t_out


def _dual_search(xs, lo, hi, delta, p, pos, gam, base):
    N = xs.shape[0]
    width = hi - lo
    target = N * delta ** p
    below = xs < hi
    full_cost = np.sum((hi - xs[below]) ** p)
    if full_cost <= target:
        pos[below] = hi
        gam[below] = 1.0
        return width, 0.0, pos, gam

    inner = (xs >= lo) & below
    outer = xs < lo

    def spent(lam):
        return _moves(xs, lo, hi, lam, p, inner, outer)[1].sum()

    lam_hi = 1.0
    while spent(lam_hi) > target:
        lam_hi *= 2.0
    lam_lo = lam_hi / 2.0
    while spent(lam_lo) <= target:
        lam_hi = lam_lo
        lam_lo /= 2.0
    for _ in range(_BISECT_ITERS):
        mid = 0.5 * (lam_lo + lam_hi)
        if mid <= lam_lo or mid >= lam_hi:
            break
        if spent(mid) > target:
            lam_lo = mid
        else:
            lam_hi = mid

    step, cost, gain, moving, t_out = _moves(xs, lo, hi, lam_hi, p, inner, outer)
    moving_lo = _moves(xs, lo, hi, lam_lo, p, inner, outer)[3]
    # points that start moving somewhere inside (lam_lo, lam_hi) share the slack
    jumpers = moving_lo & ~moving
    slack = target - cost.sum()
    total = gain.sum()
    if np.any(jumpers) and slack > 0.0:
        jcost = np.sum(t_out[jumpers] ** p)
        frac = min(1.0, slack / jcost) if jcost > 0.0 else 1.0
        pos[jumpers] = xs[jumpers] + t_out[jumpers]
        gam[jumpers] = frac
        total += frac * np.sum(t_out[jumpers] - (lo - xs[jumpers]))
    pos[moving] = xs[moving] + step[moving]
    gam[moving] = 1.0
    return float((base.sum() + total) / N), lam_hi, pos, gam


def budget_used(xs, pos, gam, p: float) -> float:
    """Transport cost (1/N) sum gam_i |pos_i - x_i|^p of a certificate."""
    xs = np.asarray(xs, dtype=float)
    return float(np.sum(np.asarray(gam) * np.abs(np.asarray(pos) - xs) ** p) / xs.shape[0])
