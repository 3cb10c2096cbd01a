"""Compiled kernels for ladder-structure simulation.

The renewal function needs, per walk, every strict descending ladder height
down to a fixed depth (or, in the dual form, every visit to [-depth, 0)
before the first weak ascending ladder epoch). The time needed to reach a
given depth has infinite mean, so plain stepping is hopeless at N = 1e5.

For Gaussian increments the walk is a Brownian motion sampled at integer
times. Far from the level of interest the kernel jumps a dyadic block of B
steps at once and refines the block by exact Brownian-bridge midpoint
sampling only when the bridge could cross that level. A block is skipped
when the crossing probability bound exp(-2 d0 d1 / (sigma^2 B)) is below
``eps``; that skip is the only approximation and its bias is O(eps).

Other increment laws are stepped one increment at a time under a step budget.
"""

import math

import numpy as np
from numba import njit

KIND_TWO_POINT = 0
KIND_GAUSSIAN = 1
KIND_PARETO = 2

_STACK = 256


@njit(cache=True)
def _seed(seed):
    np.random.seed(seed)


@njit(cache=True)
def _increment(kind, a, b):
    if kind == KIND_TWO_POINT:
        return a if np.random.random() < 0.5 else -a
    if kind == KIND_GAUSSIAN:
        return a * np.random.standard_normal()
    u = np.random.random()
    mag = b * math.expm1(-math.log1p(-u) / a)
    return mag if np.random.random() < 0.5 else -mag


@njit(cache=True)
def _push(buf, count, value):
    if count >= buf.size:
        new = np.empty(buf.size * 2)
        new[: buf.size] = buf
        buf = new
    buf[count] = value
    return buf, count + 1


@njit(cache=True)
def _block_size(d, sigma, cb):
    target = (d / sigma) ** 2 / cb
    B = 1
    while B * 2 <= target and B < (1 << 40):
        B *= 2
    return B


@njit(cache=True)
def ladder_heights(seed, n_walks, kind, a, b, depth, eps, max_ops, d0, cb):
    """Strict descending ladder heights >= -depth for each walk.

    Returns (values, owner, status) where status is 0 on success and the
    index + 1 of the first walk that ran out of budget otherwise.
    """
    _seed(seed)
    vals = np.empty(1024)
    owner = np.empty(1024)
    cnt = 0
    cnt2 = 0
    st_a = np.empty(_STACK)
    st_b = np.empty(_STACK)
    st_l = np.empty(_STACK, dtype=np.int64)
    for w in range(n_walks):
        y = 0.0
        mn = 0.0
        ops = 0
        while mn >= -depth:
            if ops > max_ops:
                return vals[:cnt], owner[:cnt2], w + 1
            d = y - mn
            if kind != KIND_GAUSSIAN or d < d0 * a:
                y += _increment(kind, a, b)
                ops += 1
                if y < mn:
                    mn = y
                    if mn >= -depth:
                        vals, cnt = _push(vals, cnt, mn)
                        owner, cnt2 = _push(owner, cnt2, w)
                continue
            B = _block_size(d, a, cb)
            y1 = y + a * math.sqrt(B) * np.random.standard_normal()
            top = 0
            st_a[0] = y
            st_b[0] = y1
            st_l[0] = B
            top = 1
            while top > 0 and mn >= -depth:
                top -= 1
                lo = st_a[top]
                hi = st_b[top]
                L = st_l[top]
                ops += 1
                if L == 1:
                    if hi < mn:
                        mn = hi
                        if mn >= -depth:
                            vals, cnt = _push(vals, cnt, mn)
                            owner, cnt2 = _push(owner, cnt2, w)
                    continue
                if lo > mn and hi > mn:
                    if math.exp(-2.0 * (lo - mn) * (hi - mn) / (a * a * L)) < eps:
                        continue
                mid = 0.5 * (lo + hi) + a * math.sqrt(L / 4.0) * np.random.standard_normal()
                half = L // 2
                st_a[top] = mid
                st_b[top] = hi
                st_l[top] = half
                st_a[top + 1] = lo
                st_b[top + 1] = mid
                st_l[top + 1] = half
                top += 2
            y = y1
    return vals[:cnt], owner[:cnt2], 0


@njit(cache=True)
def pre_ascent_visits(seed, n_walks, kind, a, b, depth, eps, max_ops, d0, cb):
    """Values S_k in [-depth, 0) for 1 <= k < iota (first k >= 1 with S_k >= 0).

    Time reversal turns sum_k P{-S_k <= x, tau_k = k} into the expected number
    of such visits, so these visits estimate the renewal function through a
    different path functional than the ladder heights.
    """
    _seed(seed)
    vals = np.empty(1024)
    owner = np.empty(1024)
    cnt = 0
    cnt2 = 0
    st_a = np.empty(_STACK)
    st_b = np.empty(_STACK)
    st_l = np.empty(_STACK, dtype=np.int64)
    for w in range(n_walks):
        y = 0.0
        ops = 0
        done = False
        while not done:
            if ops > max_ops:
                return vals[:cnt], owner[:cnt2], w + 1
            d = -depth - y
            if kind != KIND_GAUSSIAN or d < d0 * a:
                y += _increment(kind, a, b)
                ops += 1
                if y >= 0.0:
                    done = True
                elif y >= -depth:
                    vals, cnt = _push(vals, cnt, y)
                    owner, cnt2 = _push(owner, cnt2, w)
                continue
            B = _block_size(d, a, cb)
            y1 = y + a * math.sqrt(B) * np.random.standard_normal()
            st_a[0] = y
            st_b[0] = y1
            st_l[0] = B
            top = 1
            while top > 0 and not done:
                top -= 1
                lo = st_a[top]
                hi = st_b[top]
                L = st_l[top]
                ops += 1
                if L == 1:
                    if hi >= 0.0:
                        done = True
                    elif hi >= -depth:
                        vals, cnt = _push(vals, cnt, hi)
                        owner, cnt2 = _push(owner, cnt2, w)
                    continue
                if lo < -depth and hi < -depth:
                    if math.exp(-2.0 * (-depth - lo) * (-depth - hi) / (a * a * L)) < eps:
                        continue
                mid = 0.5 * (lo + hi) + a * math.sqrt(L / 4.0) * np.random.standard_normal()
                half = L // 2
                st_a[top] = mid
                st_b[top] = hi
                st_l[top] = half
                st_a[top + 1] = lo
                st_b[top + 1] = mid
                st_l[top + 1] = half
                top += 2
            y = y1
    return vals[:cnt], owner[:cnt2], 0


@njit(cache=True)
def lattice_plus_tail(seed, start, c, block, cut, max_rounds):
    """Sum over k >= 0 of e^{-c Y_k} for P+ chains Y (in units of c) started at ``start``.

    From state x above a floor b the chain's future minimum is uniform on
    {b..x}; given the minimum M it descends to M as a simple symmetric walk
    and then restarts as a P+ chain shifted by M. Levels at or above
    cut / c contribute at most e^{-cut} per visit and are skipped, so the
    walk above that level is collapsed onto it.
    """
    _seed(seed)
    top = int(math.ceil(cut / c))
    out = np.zeros(start.size)
    for i in range(start.size):
        pos = int(start[i])
        base = 0
        R = 0.0
        for _ in range(max_rounds):
            M = base + int(np.random.random() * (pos - base + 1))
            if M >= top:
                break
            y = pos if pos < top else top
            while y > M:
                R += math.exp(-c * y)
                if np.random.random() < 0.5:
                    y -= 1
                elif y < top:
                    y += 1
            j = 0
            for _ in range(block):
                if M + j < top:
                    R += math.exp(-c * (M + j))
                if np.random.random() * (2.0 * (j + 1)) < j + 2.0:
                    j += 1
                else:
                    j -= 1
            pos = M + j
            base = M
        out[i] = R
    return out
