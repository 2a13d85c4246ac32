"""Explicit-loop kernels, compiled with numba when it is available.

Every function here has a counterpart with the same signature in
:mod:`hybridfilt.kernels._numpy`; the two must agree to rounding error.
"""
import math

import numpy as np

from .._accel import njit

_EULER = 0
_EXACT = 1


@njit
def _log_emission(C, dY, h, inv_eps2, m, out):
    # log of the Gaussian likelihood ratio exp(<c, dY>/eps^2 - |c|^2 h / (2 eps^2))
    d, k = C.shape[1], C.shape[2]
    emax = -np.inf
    for a in range(k):
        g = 0.0
        c2 = 0.0
        for r in range(d):
            g += C[m, r, a] * dY[m, r]
            c2 += C[m, r, a] * C[m, r, a]
        out[a] = inv_eps2 * (g - 0.5 * c2 * h)
        if out[a] > emax:
            emax = out[a]
    return emax


@njit
def filter_kernel(Q, C, dY, h, inv_eps2, sigma0, floor, scheme):
    n, k = Q.shape[0], Q.shape[1]
    d = C.shape[1]
    sig = np.empty((n + 1, k))
    lm = np.empty(n + 1)
    tot = 0.0
    for a in range(k):
        tot += sigma0[a]
    for a in range(k):
        sig[0, a] = sigma0[a] / tot
    lm[0] = math.log(tot)
    clamps = 0
    w = np.empty(k)
    new = np.empty(k)
    for m in range(n):
        hm = h[m]
        shift = 0.0
        if scheme == _EULER:
            for a in range(k):
                g = 0.0
                for r in range(d):
                    g += C[m, r, a] * dY[m, r]
                w[a] = sig[m, a] * (1.0 + inv_eps2 * g)
        else:
            shift = _log_emission(C, dY, hm, inv_eps2, m, w)
            for a in range(k):
                w[a] = sig[m, a] * math.exp(w[a] - shift)
        for a in range(k):
            acc = 0.0
            for b in range(k):
                acc += Q[m, a, b] * sig[m, b] if scheme == _EULER else Q[m, a, b] * w[b]
            new[a] = w[a] + acc * hm
        s = 0.0
        for a in range(k):
            if new[a] < 0.0:
                new[a] = floor
                clamps += 1
            s += new[a]
        for a in range(k):
            sig[m + 1, a] = new[a] / s
        lm[m + 1] = lm[m] + shift + math.log(s)
    return sig, lm, clamps


@njit
def logmass_kernel(q0, phi, basis, psi, dY, h, inv_eps2, sigma0, floor, scheme):
    """Terminal log mass of the filter, building rates and drifts on the fly.

    ``q0`` (n, k, k) and ``basis`` (L, n, d, k) are the base fields at the
    left end of each step; ``phi`` (k, k) and ``psi`` (L,) the multipliers.
    Returns ``(log_mass, clamps)``; the arithmetic matches ``filter_kernel``.
    """
    n, k = q0.shape[0], q0.shape[1]
    d = dY.shape[1]
    L = basis.shape[0]
    sig = np.empty(k)
    tot = 0.0
    for a in range(k):
        tot += sigma0[a]
    for a in range(k):
        sig[a] = sigma0[a] / tot
    lm = math.log(tot)
    clamps = 0
    Q = np.empty((k, k))
    c = np.empty((d, k))
    w = np.empty(k)
    new = np.empty(k)
    for m in range(n):
        hm = h[m]
        for i in range(k):
            col = 0.0
            for j in range(k):
                if j != i:
                    Q[j, i] = q0[m, j, i] * phi[j, i]
                    col += Q[j, i]
                else:
                    Q[j, i] = 0.0
            Q[i, i] = -col
            for r in range(d):
                acc = 0.0
                for l in range(L):
                    acc += psi[l] * basis[l, m, r, i]
                c[r, i] = acc
        shift = 0.0
        if scheme == _EULER:
            for a in range(k):
                g = 0.0
                for r in range(d):
                    g += c[r, a] * dY[m, r]
                w[a] = sig[a] * (1.0 + inv_eps2 * g)
        else:
            shift = -np.inf
            for a in range(k):
                g = 0.0
                c2 = 0.0
                for r in range(d):
                    g += c[r, a] * dY[m, r]
                    c2 += c[r, a] * c[r, a]
                w[a] = inv_eps2 * (g - 0.5 * c2 * hm)
                if w[a] > shift:
                    shift = w[a]
            for a in range(k):
                w[a] = sig[a] * math.exp(w[a] - shift)
        for a in range(k):
            acc = 0.0
            for b in range(k):
                acc += Q[a, b] * sig[b] if scheme == _EULER else Q[a, b] * w[b]
            new[a] = w[a] + acc * hm
        s = 0.0
        for a in range(k):
            if new[a] < 0.0:
                new[a] = floor
                clamps += 1
            s += new[a]
        for a in range(k):
            sig[a] = new[a] / s
        lm += shift + math.log(s)
    return lm, clamps


@njit
def estep_kernel(Q, C, B, dY, h, inv_eps2, sigma0, floor, scheme, pairs, lm_pairs):
    """Augmented recursions for the four statistic families.

    ``pairs`` lists the off-diagonal (j, i) in row order; ``lm_pairs`` the
    (l, m) with l <= m. Statistic rows are laid out as
    [counts per pair | occupations per pair | lin per l | gram per (l, m)].
    """
    n, k = Q.shape[0], Q.shape[1]
    d = C.shape[1]
    L = B.shape[0]
    npair = pairs.shape[0]
    nlm = lm_pairs.shape[0]
    S = 2 * npair + L + nlm
    F = np.zeros((S, k))
    Fn = np.empty((S, k))
    src = np.zeros((S, k))
    sig = np.empty(k)
    tot = 0.0
    for a in range(k):
        tot += sigma0[a]
    for a in range(k):
        sig[a] = sigma0[a] / tot
    lm = math.log(tot)
    clamps = 0
    w = np.empty(k)
    signew = np.empty(k)
    gl = np.empty((L, k))
    em = np.empty(k)
    for m in range(n):
        hm = h[m]
        shift = 0.0
        if scheme == _EULER:
            for a in range(k):
                g = 0.0
                for r in range(d):
                    g += C[m, r, a] * dY[m, r]
                em[a] = 1.0 + inv_eps2 * g
        else:
            shift = _log_emission(C, dY, hm, inv_eps2, m, em)
            for a in range(k):
                em[a] = math.exp(em[a] - shift)
        # per-state increments of each basis statistic over this step
        for l in range(L):
            for a in range(k):
                g = 0.0
                for r in range(d):
                    if scheme == _EULER:
                        g += B[l, m, r, a] * dY[m, r]
                    else:
                        g += B[l, m, r, a] * (dY[m, r] - C[m, r, a] * hm)
                gl[l, a] = g
        for s_ in range(S):
            for a in range(k):
                src[s_, a] = 0.0
        if scheme == _EULER:
            for p in range(npair):
                j, i = pairs[p, 0], pairs[p, 1]
                val = Q[m, j, i] * sig[i] * hm
                src[p, j] = val
                src[npair + p, i] = val
            for l in range(L):
                for a in range(k):
                    src[2 * npair + l, a] = sig[a] * gl[l, a]
            for q in range(nlm):
                l1, l2 = lm_pairs[q, 0], lm_pairs[q, 1]
                for a in range(k):
                    dd = 0.0
                    for r in range(d):
                        dd += B[l1, m, r, a] * B[l2, m, r, a]
                    src[2 * npair + L + q, a] = sig[a] * dd * hm
            for a in range(k):
                w[a] = sig[a] * em[a]
            for a in range(k):
                acc = 0.0
                for b in range(k):
                    acc += Q[m, a, b] * sig[b]
                signew[a] = w[a] + acc * hm
            for s_ in range(S):
                for a in range(k):
                    acc = 0.0
                    for b in range(k):
                        acc += Q[m, a, b] * F[s_, b]
                    Fn[s_, a] = F[s_, a] * em[a] + acc * hm + src[s_, a]
        else:
            # sources enter before the emission/transition step; counts are
            # transitions realised during the step
            for p in range(npair):
                j, i = pairs[p, 0], pairs[p, 1]
                src[npair + p, i] = Q[m, j, i] * sig[i] * hm
            for l in range(L):
                for a in range(k):
                    src[2 * npair + l, a] = sig[a] * gl[l, a]
            for q in range(nlm):
                l1, l2 = lm_pairs[q, 0], lm_pairs[q, 1]
                for a in range(k):
                    dd = 0.0
                    for r in range(d):
                        dd += B[l1, m, r, a] * B[l2, m, r, a]
                    src[2 * npair + L + q, a] = sig[a] * dd * hm
            for a in range(k):
                w[a] = sig[a] * em[a]
            for a in range(k):
                acc = 0.0
                for b in range(k):
                    acc += Q[m, a, b] * w[b]
                signew[a] = w[a] + acc * hm
            for s_ in range(S):
                for a in range(k):
                    src[s_, a] = (F[s_, a] + src[s_, a]) * em[a]
            for s_ in range(S):
                for a in range(k):
                    acc = 0.0
                    for b in range(k):
                        acc += Q[m, a, b] * src[s_, b]
                    Fn[s_, a] = src[s_, a] + acc * hm
            for p in range(npair):
                j, i = pairs[p, 0], pairs[p, 1]
                Fn[p, j] += Q[m, j, i] * hm * w[i]
        tot = 0.0
        for a in range(k):
            if signew[a] < 0.0:
                signew[a] = floor
                clamps += 1
            tot += signew[a]
        for a in range(k):
            sig[a] = signew[a] / tot
        for s_ in range(S):
            for a in range(k):
                F[s_, a] = Fn[s_, a] / tot
        lm += shift + math.log(tot)
    out = np.zeros(S)
    for s_ in range(S):
        acc = 0.0
        for a in range(k):
            acc += F[s_, a]
        out[s_] = acc
    return out, lm, clamps


@njit
def eval_stack(const, lin, quad, grids, glen, tables, weights, y, out):
    """``out = sum_a weights[a] * field_a(y)`` in the flattened layout."""
    nf, P = const.shape[0], const.shape[1]
    d = y.shape[0]
    for p in range(P):
        out[p] = 0.0
    for f in range(nf):
        wgt = weights[f]
        if wgt == 0.0:
            continue
        g = glen[f]
        lo = 0
        frac = 0.0
        mode = 0
        if g > 0:
            x = y[0]
            if x <= grids[f, 0]:
                mode = 1
            elif x >= grids[f, g - 1]:
                mode = 2
            else:
                lo = np.searchsorted(grids[f, :g], x, side="right") - 1
                frac = (x - grids[f, lo]) / (grids[f, lo + 1] - grids[f, lo])
                mode = 3
        for p in range(P):
            v = const[f, p]
            for r in range(d):
                v += lin[f, p, r] * y[r]
            for r in range(d):
                for s in range(d):
                    v += quad[f, p, r, s] * y[r] * y[s]
            if mode == 1:
                v += tables[f, 0, p]
            elif mode == 2:
                v += tables[f, g - 1, p]
            elif mode == 3:
                v += tables[f, lo, p] + frac * (tables[f, lo + 1, p] - tables[f, lo, p])
            out[p] += wgt * v


@njit
def next_firing(A, E, inc, i):
    """Earliest clock to fire within the sub-step, as (target, fraction).

    Clock ``j`` fires when ``A[j] + inc[j] > E[j]``; the firing fraction is
    found by linear interpolation. Ties go to the smallest target index.
    Returns ``(-1, 2.0)`` when nothing fires.
    """
    best = -1
    best_frac = 2.0
    for j in range(A.shape[0]):
        if j == i:
            continue
        if A[j] + inc[j] > E[j]:
            frac = (E[j] - A[j]) / inc[j]
            if frac < best_frac:
                best_frac = frac
                best = j
    return best, best_frac


@njit
def simulate_kernel(tgrid, xi, expo, x0, y0, eps, phi,
                    r_const, r_lin, r_quad, r_grids, r_glen, r_tables,
                    d_const, d_lin, d_quad, d_grids, d_glen, d_tables, psi):
    """Exponential-clock switching with Euler-Maruyama steps for Y.

    Returns ``(times, x, y, jumps, count, njumps)``; ``count < 0`` signals
    that the pre-drawn exponential buffer ran out.
    """
    n = tgrid.shape[0] - 1
    d = y0.shape[0]
    k = phi.shape[0]
    cap = expo.shape[0]
    size = n + 1 + cap
    times = np.empty(size)
    xs = np.empty(size, dtype=np.int64)
    ys = np.empty((size, d))
    jumps = np.empty((cap, 3))
    one = np.ones(1)
    rflat = np.empty(k * k)
    dflat = np.empty(d * k)
    ra = np.empty(k)
    rb = np.empty(k)
    inc = np.empty(k)
    A = np.zeros(k)
    y = y0.copy()
    ya = np.empty(d)
    yb = np.empty(d)
    i = x0
    epoch = 0
    cnt = 0
    nj = 0
    times[0] = tgrid[0]
    xs[0] = i
    ys[0] = y
    eval_stack(r_const, r_lin, r_quad, r_grids, r_glen, r_tables, one, y, rflat)
    for j in range(k):
        ra[j] = rflat[j * k + i] * phi[j, i]
    cnt = 1
    for m in range(n):
        hm = tgrid[m + 1] - tgrid[m]
        eval_stack(d_const, d_lin, d_quad, d_grids, d_glen, d_tables, psi, y, dflat)
        sq = math.sqrt(hm)
        for r in range(d):
            yb[r] = y[r] + dflat[r * k + i] * hm + eps * sq * xi[m, r]
            ya[r] = y[r]
        ta = tgrid[m]
        tb = tgrid[m + 1]
        eval_stack(r_const, r_lin, r_quad, r_grids, r_glen, r_tables, one, yb, rflat)
        while True:
            for j in range(k):
                rb[j] = rflat[j * k + i] * phi[j, i]
            span = tb - ta
            for j in range(k):
                inc[j] = 0.5 * (ra[j] + rb[j]) * span
            target, frac = next_firing(A, expo[epoch], inc, i)
            if target < 0:
                for j in range(k):
                    A[j] += inc[j]
                break
            tau = ta + frac * span
            if tau <= ta:
                tau = np.nextafter(ta, np.inf)
            if tau >= tb:
                tau = np.nextafter(tb, -np.inf)
            lam = (tau - ta) / span
            for r in range(d):
                ya[r] = ya[r] + lam * (yb[r] - ya[r])
            if nj >= cap - 1:
                return times, xs, ys, jumps, -1, nj
            jumps[nj, 0] = tau
            jumps[nj, 1] = i
            jumps[nj, 2] = target
            nj += 1
            i = target
            epoch += 1
            for j in range(k):
                A[j] = 0.0
            times[cnt] = tau
            xs[cnt] = i
            ys[cnt] = ya
            cnt += 1
            ta = tau
            eval_stack(r_const, r_lin, r_quad, r_grids, r_glen, r_tables, one, ya, rflat)
            for j in range(k):
                ra[j] = rflat[j * k + i] * phi[j, i]
            # right end rates for the new state
            eval_stack(r_const, r_lin, r_quad, r_grids, r_glen, r_tables, one, yb, rflat)
        for r in range(d):
            y[r] = yb[r]
        times[cnt] = tb
        xs[cnt] = i
        ys[cnt] = y
        cnt += 1
        for j in range(k):
            ra[j] = rb[j]
    return times, xs, ys, jumps, cnt, nj


@njit
def _first_crossing(H, level):
    """Position ``(step, fraction)`` where the piecewise-linear ``H`` first exceeds ``level``."""
    m = np.searchsorted(H, level, side="right") - 1
    if m >= H.shape[0] - 1:
        return -1, 2.0
    return m, (level - H[m]) / (H[m + 1] - H[m])


@njit
def mc_kernel(haz, cw, cocc, clin, cgram, x0, expo, query):
    """Particles of X given a frozen Y path, by inversion of cumulative hazards.

    ``haz[j, i]`` (k, k, n+1) is the cumulative i->j hazard on the grid
    (trapezoid rule, linear in between). ``cw``, ``cocc``, ``clin`` and
    ``cgram`` are prefix sums over steps of the per-state log-weight,
    occupation, lin and gram increments (left-point rule: a step counts for
    the state held at its left end). Returns per-particle counts, occupations,
    lin and gram statistics, final log-weights, and log-weights and states
    at the sorted grid indices ``query``; ``status`` is -1 if a particle ran
    out of pre-drawn clocks.
    """
    P = x0.shape[0]
    k = haz.shape[0]
    n = haz.shape[2] - 1
    L = clin.shape[1]
    cap = expo.shape[1]
    nq = query.shape[0]
    counts = np.zeros((P, k, k))
    occ = np.zeros((P, k, k))
    lin = np.zeros((P, L))
    gram = np.zeros((P, L, L))
    logw = np.zeros(P)
    logw_q = np.zeros((P, nq))
    state_q = np.zeros((P, nq), dtype=np.int64)
    status = 0
    for p in range(P):
        i = x0[p]
        m0 = 0
        f0 = 0.0
        first = 0          # first step whose left end is in state i
        lw = 0.0
        qi = 0
        epoch = 0
        while True:
            best = -1
            bm = n
            bf = 2.0
            for j in range(k):
                if j == i:
                    continue
                H = haz[j, i]
                start = H[m0] + f0 * (H[m0 + 1] - H[m0]) if m0 < n else H[n]
                mj, fj = _first_crossing(H, start + expo[p, epoch, j])
                if mj < 0:
                    continue
                if mj < bm or (mj == bm and fj < bf):
                    best, bm, bf = j, mj, fj
            last = bm if best >= 0 else n - 1   # last step held in state i
            # queries at grid points whose state is i
            while qi < nq and query[qi] <= last:
                if query[qi] >= first:
                    logw_q[p, qi] = lw + cw[query[qi], i] - cw[first, i]
                    state_q[p, qi] = i
                qi += 1
            if last >= first:
                lw += cw[last + 1, i] - cw[first, i]
                for j in range(k):
                    occ[p, j, i] += cocc[last + 1, j, i] - cocc[first, j, i]
                for l in range(L):
                    lin[p, l] += clin[last + 1, l, i] - clin[first, l, i]
                    for l2 in range(L):
                        gram[p, l, l2] += cgram[last + 1, l, l2, i] - cgram[first, l, l2, i]
            if best < 0:
                break
            if epoch + 1 >= cap:
                status = -1
                break
            counts[p, best, i] += 1.0
            i = best
            m0 = bm
            f0 = bf
            first = bm + 1
            epoch += 1
        while qi < nq:
            logw_q[p, qi] = lw
            state_q[p, qi] = i
            qi += 1
        logw[p] = lw
    return counts, occ, lin, gram, logw, logw_q, state_q, status
