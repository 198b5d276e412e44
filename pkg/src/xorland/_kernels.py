"""Jitted numerical kernels for the XOR-network loss.

Flat weight layout, shared by every module: w1 (2 x nh, row-major),
w2 (nh x 2, row-major), bh (nh), bo (2); dim = 5*nh + 2.

Everything here is deliberately loop-based: vectors are tiny (dim <= 32)
and these functions sit inside basin-hopping / band-relaxation inner loops,
so per-call overhead dominates any vectorization win.
"""

import math

import numpy as np
from numba import njit

# The four XOR training pairs, fixed for all kernels.
_XA = (0.0, 0.0, 1.0, 1.0)
_XB = (0.0, 1.0, 0.0, 1.0)
_CLS = (0, 1, 1, 0)

# lbfgs() status codes
LBFGS_CONVERGED = 0
LBFGS_MAX_ITERS = 1
LBFGS_NAN = 2
LBFGS_LINE_SEARCH_STALL = 3


@njit(cache=True)
def net_outputs(w, nh, x0, x1):
    """Raw two-logit output of the tanh network at input (x0, x1)."""
    ow2 = 2 * nh
    obh = 4 * nh
    obo = 5 * nh
    y0 = w[obo]
    y1 = w[obo + 1]
    for j in range(nh):
        a = w[obh + j] + w[ow2 + 2 * j] * x0 + w[ow2 + 2 * j + 1] * x1
        t = math.tanh(a)
        y0 += w[j] * t
        y1 += w[nh + j] * t
    return y0, y1


@njit(cache=True)
def softmax_pair(y0, y1):
    """Two-class softmax, max-shifted so large logits cannot overflow."""
    m = y0 if y0 > y1 else y1
    e0 = math.exp(y0 - m)
    e1 = math.exp(y1 - m)
    z = e0 + e1
    return e0 / z, e1 / z


@njit(cache=True)
def log_softmax_pair(y0, y1):
    m = y0 if y0 > y1 else y1
    lz = math.log(math.exp(y0 - m) + math.exp(y1 - m))
    return y0 - m - lz, y1 - m - lz


@njit(cache=True)
def loss(w, nh, lam):
    """Mean cross-entropy over the four XOR pairs plus lam * |w|^2."""
    e = 0.0
    for d in range(4):
        y0, y1 = net_outputs(w, nh, _XA[d], _XB[d])
        lp0, lp1 = log_softmax_pair(y0, y1)
        if _CLS[d] == 0:
            e -= 0.25 * lp0
        else:
            e -= 0.25 * lp1
    pen = 0.0
    for m in range(w.shape[0]):
        pen += w[m] * w[m]
    return e + lam * pen


@njit(cache=True)
def loss_grad(w, nh, lam, g):
    """Loss value; analytic gradient written into g."""
    dim = w.shape[0]
    ow2 = 2 * nh
    obh = 4 * nh
    obo = 5 * nh
    for m in range(dim):
        g[m] = 0.0
    e = 0.0
    t = np.empty(nh)
    s = np.empty(nh)
    for d in range(4):
        x0 = _XA[d]
        x1 = _XB[d]
        y0 = w[obo]
        y1 = w[obo + 1]
        for j in range(nh):
            a = w[obh + j] + w[ow2 + 2 * j] * x0 + w[ow2 + 2 * j + 1] * x1
            t[j] = math.tanh(a)
            s[j] = 1.0 - t[j] * t[j]
            y0 += w[j] * t[j]
            y1 += w[nh + j] * t[j]
        lp0, lp1 = log_softmax_pair(y0, y1)
        p0 = math.exp(lp0)
        p1 = math.exp(lp1)
        if _CLS[d] == 0:
            e -= 0.25 * lp0
            q0 = p0 - 1.0
            q1 = p1
        else:
            e -= 0.25 * lp1
            q0 = p0
            q1 = p1 - 1.0
        for j in range(nh):
            g[j] += 0.25 * q0 * t[j]
            g[nh + j] += 0.25 * q1 * t[j]
            cj = 0.25 * (q0 * w[j] + q1 * w[nh + j]) * s[j]
            g[ow2 + 2 * j] += cj * x0
            g[ow2 + 2 * j + 1] += cj * x1
            g[obh + j] += cj
        g[obo] += 0.25 * q0
        g[obo + 1] += 0.25 * q1
    pen = 0.0
    for m in range(dim):
        pen += w[m] * w[m]
        g[m] += 2.0 * lam * w[m]
    return e + lam * pen


@njit(cache=True)
def hessian(w, nh, lam, h):
    """Analytic second derivatives of the loss, written into h (dim x dim).

    Per datum: softmax curvature contracted with the logit Jacobian, plus
    the residual contracted with the logit second derivatives. The penalty
    contributes 2*lam on the diagonal. Symmetric by construction.
    """
    dim = w.shape[0]
    ow2 = 2 * nh
    obh = 4 * nh
    obo = 5 * nh
    for a in range(dim):
        for b in range(dim):
            h[a, b] = 0.0
    g0 = np.empty(dim)
    g1 = np.empty(dim)
    gbar = np.empty(dim)
    zs = np.empty(3, dtype=np.int64)
    zv = np.empty(3)
    t = np.empty(nh)
    s = np.empty(nh)
    for d in range(4):
        x0 = _XA[d]
        x1 = _XB[d]
        y0 = w[obo]
        y1 = w[obo + 1]
        for j in range(nh):
            a = w[obh + j] + w[ow2 + 2 * j] * x0 + w[ow2 + 2 * j + 1] * x1
            t[j] = math.tanh(a)
            s[j] = 1.0 - t[j] * t[j]
            y0 += w[j] * t[j]
            y1 += w[nh + j] * t[j]
        p0, p1 = softmax_pair(y0, y1)
        if _CLS[d] == 0:
            q0 = p0 - 1.0
            q1 = p1
        else:
            q0 = p0
            q1 = p1 - 1.0
        # Jacobian rows of (y0, y1) with respect to w
        for m in range(dim):
            g0[m] = 0.0
            g1[m] = 0.0
        for j in range(nh):
            g0[j] = t[j]
            g1[nh + j] = t[j]
            g0[ow2 + 2 * j] = w[j] * s[j] * x0
            g0[ow2 + 2 * j + 1] = w[j] * s[j] * x1
            g0[obh + j] = w[j] * s[j]
            g1[ow2 + 2 * j] = w[nh + j] * s[j] * x0
            g1[ow2 + 2 * j + 1] = w[nh + j] * s[j] * x1
            g1[obh + j] = w[nh + j] * s[j]
        g0[obo] = 1.0
        g1[obo + 1] = 1.0
        for m in range(dim):
            gbar[m] = p0 * g0[m] + p1 * g1[m]
        # softmax curvature: sum_i p_i G_i G_i^T - gbar gbar^T
        for a in range(dim):
            c0 = 0.25 * p0 * g0[a]
            c1 = 0.25 * p1 * g1[a]
            cb = 0.25 * gbar[a]
            for b in range(dim):
                h[a, b] += c0 * g0[b] + c1 * g1[b] - cb * gbar[b]
        # residual times second derivatives of the logits
        for j in range(nh):
            zs[0] = ow2 + 2 * j
            zs[1] = ow2 + 2 * j + 1
            zs[2] = obh + j
            zv[0] = x0
            zv[1] = x1
            zv[2] = 1.0
            vj = -2.0 * t[j] * s[j]
            alpha = q0 * w[j] + q1 * w[nh + j]
            for k in range(3):
                c0 = 0.25 * q0 * s[j] * zv[k]
                c1 = 0.25 * q1 * s[j] * zv[k]
                h[j, zs[k]] += c0
                h[zs[k], j] += c0
                h[nh + j, zs[k]] += c1
                h[zs[k], nh + j] += c1
                ca = 0.25 * alpha * vj * zv[k]
                for kk in range(3):
                    h[zs[k], zs[kk]] += ca * zv[kk]
    for a in range(dim):
        h[a, a] += 2.0 * lam


@njit(cache=True)
def prob1_grid(w, nh, offsets, out):
    """Class-1 probability on the square grid offsets x offsets."""
    n = offsets.shape[0]
    for iy in range(n):
        for ix in range(n):
            y0, y1 = net_outputs(w, nh, offsets[ix], offsets[iy])
            p0, p1 = softmax_pair(y0, y1)
            out[iy, ix] = p1


@njit(cache=True)
def _dot(a, b):
    acc = 0.0
    for m in range(a.shape[0]):
        acc += a[m] * b[m]
    return acc


@njit(cache=True)
def _norm(a):
    return math.sqrt(_dot(a, a))


@njit(cache=True)
def _project_out(a, v):
    """Remove the component of a along v in place (v zero => no-op)."""
    c = _dot(a, v)
    if c != 0.0:
        for m in range(a.shape[0]):
            a[m] -= c * v[m]


@njit(cache=True)
def lbfgs(w0, nh, lam, tol, max_iters, hist, max_step, proj):
    """Two-loop L-BFGS with backtracking Armijo line search.

    proj: unit direction excluded from every gradient and step (projected
    minimization), or the zero vector for plain minimization.

    Returns (x, f, grad_rms, iterations, status); see LBFGS_* codes.
    The gradient RMS is |g| / sqrt(dim) over the projected gradient.
    """
    dim = w0.shape[0]
    sqd = math.sqrt(dim)
    x = w0.copy()
    g = np.empty(dim)
    f = loss_grad(x, nh, lam, g)
    if not math.isfinite(f):
        return x, f, 0.0, 0, LBFGS_NAN
    _project_out(g, proj)

    S = np.zeros((hist, dim))
    Y = np.zeros((hist, dim))
    rho = np.zeros(hist)
    alpha = np.zeros(hist)
    nstored = 0
    head = 0
    gamma = 1.0

    q = np.empty(dim)
    xt = np.empty(dim)
    gt = np.empty(dim)
    iters = 0
    status = LBFGS_MAX_ITERS

    for it in range(max_iters):
        rms = _norm(g) / sqd
        if rms <= tol:
            status = LBFGS_CONVERGED
            break
        # two-loop recursion, newest pair first
        for m in range(dim):
            q[m] = g[m]
        for k in range(nstored):
            idx = (head - 1 - k) % hist
            a = rho[idx] * _dot(S[idx], q)
            alpha[idx] = a
            for m in range(dim):
                q[m] -= a * Y[idx, m]
        for m in range(dim):
            q[m] *= gamma
        for k in range(nstored - 1, -1, -1):
            idx = (head - 1 - k) % hist
            b = rho[idx] * _dot(Y[idx], q)
            for m in range(dim):
                q[m] += (alpha[idx] - b) * S[idx, m]
        for m in range(dim):
            q[m] = -q[m]
        _project_out(q, proj)
        dg = _dot(q, g)
        if dg >= 0.0:
            # not a descent direction: drop the history, fall back to -g
            nstored = 0
            head = 0
            gamma = 1.0
            for m in range(dim):
                q[m] = -g[m]
            dg = -_dot(g, g)
        dn = _norm(q)
        if dn > max_step:
            scale = max_step / dn
            for m in range(dim):
                q[m] *= scale
            dg *= scale

        step = 1.0
        accepted = False
        ft = f
        while step >= 1e-14:
            for m in range(dim):
                xt[m] = x[m] + step * q[m]
            ft = loss(xt, nh, lam)
            if math.isfinite(ft) and ft <= f + 1e-4 * step * dg:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            status = LBFGS_LINE_SEARCH_STALL
            break

        fnew = loss_grad(xt, nh, lam, gt)
        bad = not math.isfinite(fnew)
        for m in range(dim):
            if not math.isfinite(gt[m]):
                bad = True
        if bad:
            iters = it
            status = LBFGS_NAN
            break
        _project_out(gt, proj)

        sy = 0.0
        ss = 0.0
        yy = 0.0
        for m in range(dim):
            sm = xt[m] - x[m]
            ym = gt[m] - g[m]
            sy += sm * ym
            ss += sm * sm
            yy += ym * ym
        if sy > 1e-10 * math.sqrt(ss * yy) and yy > 0.0:
            for m in range(dim):
                S[head, m] = xt[m] - x[m]
                Y[head, m] = gt[m] - g[m]
            rho[head] = 1.0 / sy
            gamma = sy / yy
            head = (head + 1) % hist
            nstored = min(nstored + 1, hist)

        for m in range(dim):
            x[m] = xt[m]
            g[m] = gt[m]
        f = fnew
        iters = it + 1

    rms = _norm(g) / sqd
    if status == LBFGS_MAX_ITERS or status == LBFGS_LINE_SEARCH_STALL:
        if rms <= tol:
            status = LBFGS_CONVERGED
    return x, f, rms, iters, status
