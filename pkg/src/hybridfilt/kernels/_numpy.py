"""Pure-numpy kernels: vectorized over states or particles, looping in time."""
import numpy as np

_EULER = 0


def _emission_logs(C, dY, h, inv_eps2):
    g = np.einsum("nrk,nr->nk", C, dY)
    c2 = np.einsum("nrk,nrk->nk", C, C)
    return g, inv_eps2 * (g - 0.5 * c2 * h[:, None])


def filter_kernel(Q, C, dY, h, inv_eps2, sigma0, floor, scheme):
    n, k = Q.shape[0], Q.shape[1]
    sig = np.empty((n + 1, k))
    lm = np.empty(n + 1)
    tot = sigma0.sum()
    sig[0] = sigma0 / tot
    lm[0] = np.log(tot)
    g, le = _emission_logs(C, dY, h, inv_eps2)
    if scheme == _EULER:
        mult = 1.0 + inv_eps2 * g
        shift = np.zeros(n)
    else:
        shift = le.max(axis=1)
        mult = np.exp(le - shift[:, None])
    clamps = 0
    s_prev = sig[0]
    for m in range(n):
        w = s_prev * mult[m]
        base = s_prev if scheme == _EULER else w
        new = w + (Q[m] @ base) * h[m]
        neg = new < 0.0
        if neg.any():
            clamps += int(neg.sum())
            new[neg] = floor
        s = new.sum()
        s_prev = new / s
        sig[m + 1] = s_prev
        lm[m + 1] = lm[m] + shift[m] + np.log(s)
    return sig, lm, clamps


def logmass_kernel(q0, phi, basis, psi, dY, h, inv_eps2, sigma0, floor, scheme):
    Q = q0 * phi
    k = Q.shape[1]
    diag = Q.reshape(-1, k * k)[:, ::k + 1]
    diag[...] = 0.0
    col = Q[:, 0, :].copy()
    for j in range(1, k):
        col += Q[:, j, :]
    diag[...] = -col
    C = np.tensordot(psi, basis, axes=1) if basis.shape[0] else np.zeros(basis.shape[1:])
    _, lm, clamps = filter_kernel(Q, C, dY, h, inv_eps2, sigma0, floor, scheme)
    return lm[-1], clamps


def estep_kernel(Q, C, B, dY, h, inv_eps2, sigma0, floor, scheme, pairs, lm_pairs):
    n, k = Q.shape[0], Q.shape[1]
    L = B.shape[0]
    npair, nlm = pairs.shape[0], lm_pairs.shape[0]
    S = 2 * npair + L + nlm
    pj, pi = pairs[:, 0], pairs[:, 1]
    rows_c = np.arange(npair)
    rows_o = npair + rows_c
    rows_l = slice(2 * npair, 2 * npair + L)
    rows_g = slice(2 * npair + L, S)
    g, le = _emission_logs(C, dY, h, inv_eps2)
    if scheme == _EULER:
        em = 1.0 + inv_eps2 * g
        shift = np.zeros(n)
        gl = np.einsum("lnrk,nr->nlk", B, dY)
    else:
        shift = le.max(axis=1)
        em = np.exp(le - shift[:, None])
        resid = dY[:, :, None] - C * h[:, None, None]
        gl = np.einsum("lnrk,nrk->nlk", B, resid)
    qp = Q[:, pj, pi] * h[:, None]
    dd = np.einsum("qnrk,qnrk->nqk", B[lm_pairs[:, 0]], B[lm_pairs[:, 1]]) * h[:, None, None]
    F = np.zeros((S, k))
    sig = sigma0 / sigma0.sum()
    lm = np.log(sigma0.sum())
    clamps = 0
    for m in range(n):
        src = np.zeros((S, k))
        val = qp[m] * sig[pi]
        if scheme == _EULER:
            src[rows_c, pj] = val
        src[rows_o, pi] = val
        src[rows_l] = sig * gl[m]
        src[rows_g] = sig * dd[m]
        w = sig * em[m]
        if scheme == _EULER:
            signew = w + (Q[m] @ sig) * h[m]
            Fn = F * em[m] + (F @ Q[m].T) * h[m] + src
        else:
            signew = w + (Q[m] @ w) * h[m]
            pre = (F + src) * em[m]
            Fn = pre + (pre @ Q[m].T) * h[m]
            Fn[rows_c, pj] += qp[m] * w[pi]
        neg = signew < 0.0
        if neg.any():
            clamps += int(neg.sum())
            signew[neg] = floor
        tot = signew.sum()
        sig = signew / tot
        F = Fn / tot
        lm += shift[m] + np.log(tot)
    return F.sum(axis=1), lm, clamps


def mc_kernel(haz, cw, cocc, clin, cgram, x0, expo, query):
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
    x = x0.astype(np.int64).copy()
    m0 = np.zeros(P, dtype=np.int64)
    f0 = np.zeros(P)
    first = np.zeros(P, dtype=np.int64)
    qdone = np.zeros((P, nq), dtype=bool)
    active = np.arange(P)
    status = 0
    epoch = 0
    while active.size:
        na = active.size
        xa = x[active]
        bm = np.full(na, n, dtype=np.int64)
        bf = np.full(na, 2.0)
        best = np.full(na, -1, dtype=np.int64)
        for j in range(k):
            for i in range(k):
                if i == j:
                    continue
                sel = np.flatnonzero(xa == i)
                if sel.size == 0:
                    continue
                H = haz[j, i]
                pa = active[sel]
                mm = m0[pa]
                start = H[mm] + f0[pa] * (H[np.minimum(mm + 1, n)] - H[mm])
                level = start + expo[pa, epoch, j]
                mj = np.searchsorted(H, level, side="right") - 1
                ok = mj < n
                mjc = np.minimum(mj, n - 1)
                fj = np.where(ok, (level - H[mjc]) / np.where(ok, H[mjc + 1] - H[mjc], 1.0), 2.0)
                mj = np.where(ok, mj, n)
                better = ok & ((mj < bm[sel]) | ((mj == bm[sel]) & (fj < bf[sel])))
                s2 = sel[better]
                best[s2], bm[s2], bf[s2] = j, mj[better], fj[better]
        fired = best >= 0
        last = np.where(fired, bm, n - 1)
        fa = first[active]
        hi = last + 1
        has = last >= fa
        lo_ = np.where(has, fa, 0)
        hi_ = np.where(has, hi, 0)
        lw_seg = cw[hi_, xa] - cw[lo_, xa]
        for qn in range(nq):
            q = query[qn]
            inseg = (~qdone[active, qn]) & (q <= last)
            hit = inseg & (q >= fa)
            tgt = active[hit]
            logw_q[tgt, qn] = logw[tgt] + cw[q, xa[hit]] - cw[fa[hit], xa[hit]]
            state_q[tgt, qn] = xa[hit]
            qdone[active[inseg], qn] = True
        logw[active] += lw_seg
        occ[active, :, xa] += cocc[hi_, :, xa] - cocc[lo_, :, xa]
        if L:
            lin[active] += clin[hi_, :, xa] - clin[lo_, :, xa]
            gram[active] += cgram[hi_, :, :, xa] - cgram[lo_, :, :, xa]
        jp = active[fired]
        if jp.size and epoch + 1 >= cap:
            status = -1
            break
        counts[jp, best[fired], x[jp]] += 1.0
        x[jp] = best[fired]
        m0[jp] = bm[fired]
        f0[jp] = bf[fired]
        first[jp] = bm[fired] + 1
        active = jp
        epoch += 1
    for qn in range(nq):
        rest = ~qdone[:, qn]
        logw_q[rest, qn] = logw[rest]
        state_q[rest, qn] = x[rest]
    return counts, occ, lin, gram, logw, logw_q, state_q, status
