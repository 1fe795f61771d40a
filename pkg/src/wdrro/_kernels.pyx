# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled one-dimensional worst-case kernel (same contract as _kernels_py)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport pow, fmin, fmax, INFINITY

cnp.import_array()

cdef int BISECT_ITERS = 200


cdef inline double _power(double t, double p) nogil:
    if p == 2.0:
        return t * t
    return pow(t, p)


cdef inline double _tau(double lam, double p) nogil:
    if p == 2.0:
        return 0.5 / lam
    return pow(1.0 / (p * lam), 1.0 / (p - 1.0))


cdef double _spent(const double[::1] xs, Py_ssize_t first, Py_ssize_t stop,
                   double lo, double hi, double lam, double p) nogil:
    # points with index >= stop lie at or above hi; points below first are < lo
    cdef double tau = _tau(lam, p)
    cdef double total = 0.0, x, t, gap
    cdef Py_ssize_t i
    for i in range(first, stop):
        t = fmin(tau, hi - xs[i])
        total += _power(t, p)
    for i in range(first - 1, -1, -1):
        x = xs[i]
        gap = lo - x
        t = fmin(fmax(tau, gap), hi - x)
        if t - gap - lam * _power(t, p) > 0.0:
            total += _power(t, p)
        else:
            # the payoff of moving only shrinks for points farther left
            break
    return total


def clip_worst_case(xs_in, double lo, double hi, double delta, double p):
    cdef const double[::1] xs = np.ascontiguousarray(xs_in, dtype=np.float64)
    cdef Py_ssize_t N = xs.shape[0]
    cdef double width = hi - lo
    pos_arr = np.array(xs, dtype=np.float64, copy=True)
    gam_arr = np.zeros(N, dtype=np.float64)
    cdef double[::1] pos = pos_arr
    cdef double[::1] gam = gam_arr
    if width <= 0.0:
        return 0.0, 0.0, pos_arr, gam_arr

    cdef Py_ssize_t i, first = 0, stop = N
    cdef double base = 0.0
    while first < N and xs[first] < lo:
        first += 1
    while stop > 0 and xs[stop - 1] >= hi:
        stop -= 1
    for i in range(first, stop):
        base += xs[i] - lo
    base += (N - stop) * width
    if delta <= 0.0:
        return base / N, INFINITY, pos_arr, gam_arr
    if p == 1.0:
        return _greedy(xs, first, stop, lo, hi, delta, pos, gam, base, pos_arr, gam_arr)
    return _dual(xs, first, stop, lo, hi, delta, p, pos, gam, base, pos_arr, gam_arr)


cdef tuple _greedy(const double[::1] xs, Py_ssize_t first, Py_ssize_t stop, double lo,
                   double hi, double delta, double[::1] pos, double[::1] gam, double base,
                   object pos_arr, object gam_arr):
    cdef Py_ssize_t N = xs.shape[0], i
    cdef double width = hi - lo
    cdef double budget = N * delta, gain = 0.0, lam = 0.0, x, dist, move, frac
    i = stop - 1
    while i >= 0 and budget > 0.0:
        x = xs[i]
        dist = hi - x
        if x >= lo:
            move = fmin(dist, budget)
            pos[i] = x + move
            gam[i] = 1.0
            gain += move
            budget -= move
            if move < dist or budget <= 0.0:
                lam = 1.0
        else:
            frac = fmin(1.0, budget / dist)
            pos[i] = hi
            gam[i] = frac
            gain += frac * width
            budget -= frac * dist
            if frac < 1.0 or budget <= 0.0:
                lam = width / dist
        i -= 1
    return (base + gain) / N, lam, pos_arr, gam_arr


cdef tuple _dual(const double[::1] xs, Py_ssize_t first, Py_ssize_t stop, double lo,
                 double hi, double delta, double p, double[::1] pos, double[::1] gam,
                 double base, object pos_arr, object gam_arr):
    cdef Py_ssize_t N = xs.shape[0], i
    cdef double width = hi - lo
    cdef double target = N * pow(delta, p)
    cdef double full = 0.0
    for i in range(stop):
        full += _power(hi - xs[i], p)
    if full <= target:
        for i in range(stop):
            pos[i] = hi
            gam[i] = 1.0
        return width, 0.0, pos_arr, gam_arr

    cdef double lam_hi = 1.0, lam_lo, mid
    cdef int it
    with nogil:
        while _spent(xs, first, stop, lo, hi, lam_hi, p) > target:
            lam_hi *= 2.0
        lam_lo = lam_hi / 2.0
        while _spent(xs, first, stop, lo, hi, lam_lo, p) <= target:
            lam_hi = lam_lo
            lam_lo /= 2.0
        for it in range(BISECT_ITERS):
            mid = 0.5 * (lam_lo + lam_hi)
            if mid <= lam_lo or mid >= lam_hi:
                break
            if _spent(xs, first, stop, lo, hi, mid, p) > target:
                lam_lo = mid
            else:
                lam_hi = mid

    cdef double tau = _tau(lam_hi, p), tau_lo = _tau(lam_lo, p)
    cdef double spent = 0.0, gain = 0.0, t, x, gap, t_lo
    cdef double jcost = 0.0, jgain = 0.0, frac
    jumpers = []
    for i in range(first, stop):
        t = fmin(tau, hi - xs[i])
        pos[i] = xs[i] + t
        gam[i] = 1.0
        spent += _power(t, p)
        gain += t
    for i in range(first):
        x = xs[i]
        gap = lo - x
        t = fmin(fmax(tau, gap), hi - x)
        if t - gap - lam_hi * _power(t, p) > 0.0:
            pos[i] = x + t
            gam[i] = 1.0
            spent += _power(t, p)
            gain += t - gap
        else:
            t_lo = fmin(fmax(tau_lo, gap), hi - x)
            if t_lo - gap - lam_lo * _power(t_lo, p) > 0.0:
                jumpers.append(i)
                jcost += _power(t, p)
                jgain += t - gap
    if jumpers and target > spent:
        frac = fmin(1.0, (target - spent) / jcost) if jcost > 0.0 else 1.0
        for i in jumpers:
            x = xs[i]
            gap = lo - x
            pos[i] = x + fmin(fmax(tau, gap), hi - x)
            gam[i] = frac
        gain += frac * jgain
    return (base + gain) / N, lam_hi, pos_arr, gam_arr
