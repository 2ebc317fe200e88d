"""Hot numeric kernels: the sampler chain loop and per-draw score sums.

Every kernel is written once as plain Python over numpy arrays and built
twice: a numba @njit version and an interpreted fallback.  Setting the
environment variable FAIRGAUGE_NO_NUMBA=1 (or numba being unavailable)
selects the fallback, in which case the per-draw reductions switch to
vectorized numpy implementations.  benchmarks/bench_kernels.py times the
two builds side by side.

Sampled state layout (transformed space), for G groups:

    [x_{0,0} .. x_{0,ngd-1}, x_{1,0} .. , mu_0..mu_{ngd-1}, t_0..t_{ngd-1}]

where ngd = 3 for the full calibration family (log a, log b, c) and 2 for
the log-odds-linear family (log a, c), and t_k = log sigma_k.  The hyper
block is absent when the hierarchy is frozen.  Each chain iteration is a
composition of Metropolis-Hastings moves, all preserving the target:

    1. a global independence proposal drawn ancestrally from the prior
       (acceptance ratio = likelihood ratio);
    2. per-group random-walk proposals with covariance adapted during
       burn-in (Haario-style), frozen afterwards;
    3. per-group independence proposals from the conditional prior;
    4. per-hyper-pair random-walk proposals, adapted as in 2;
    5. per-hyper-pair independence proposals from the hyperprior.

The refresh moves (1, 3, 5) make prior-only runs produce effectively
independent draws and give sparsely-labeled groups fast mixing; with
informative data they are simply rejected most of the time.  All
randomness is pre-generated by the caller and consumed at fixed indices,
so a chain is reproducible across both builds.
"""

from __future__ import annotations

import math
import os
from types import SimpleNamespace

import numpy as np

try:
    import numba

    NUMBA_AVAILABLE = True
except ImportError:  # pragma: no cover - exercised only without numba
    numba = None
    NUMBA_AVAILABLE = False

_DISABLED = os.environ.get("FAIRGAUGE_NO_NUMBA", "").strip().lower() in {
    "1", "true", "yes", "on",
}
USE_NUMBA = NUMBA_AVAILABLE and not _DISABLED

LOG_SQRT_2PI = 0.9189385332046727  # 0.5 * log(2 * pi)
LOG_2 = 0.6931471805599453


def _build(decorate):
    @decorate
    def logistic(x):
        if x >= 0.0:
            return 1.0 / (1.0 + math.exp(-x))
        e = math.exp(x)
        return e / (1.0 + e)

    @decorate
    def log_normal_pdf(x, mu, sigma):
        z = (x - mu) / sigma
        return -LOG_SQRT_2PI - math.log(sigma) - 0.5 * z * z

    @decorate
    def log_half_normal_pdf(x, scale):
        z = x / scale
        return LOG_2 - LOG_SQRT_2PI - math.log(scale) - 0.5 * z * z

    @decorate
    def group_loglik(L, M, y, lo, hi, a, b, c):
        # Bernoulli log-likelihood of labels under the calibrated scores:
        # sum_i y_i*eta_i - log(1 + exp(eta_i)), eta = c + a*log s - b*log(1-s)
        ll = 0.0
        for i in range(lo, hi):
            eta = c + a * L[i] - b * M[i]
            if eta > 0.0:
                sp = eta + math.log1p(math.exp(-eta))
            else:
                sp = math.log1p(math.exp(eta))
            ll += y[i] * eta - sp
        return ll

    @decorate
    def group_abc(state, g, ngd):
        a = math.exp(state[g * ngd])
        if ngd == 3:
            return a, math.exp(state[g * ngd + 1]), state[g * ngd + 2]
        return a, a, state[g * ngd + 1]

    @decorate
    def dim_hyper(state, G, ngd, hier, frozen_mu, frozen_sg, k):
        if hier == 1:
            base = G * ngd
            return state[base + k], math.exp(state[base + ngd + k])
        return frozen_mu[k], frozen_sg[k]

    @decorate
    def target_logpdf(state, L, M, y, goff, ngd, hier,
                      dim_mu_scale, dim_sg_scale, frozen_mu, frozen_sg):
        G = goff.size - 1
        tot = 0.0
        for g in range(G):
            a, b, c = group_abc(state, g, ngd)
            tot += group_loglik(L, M, y, goff[g], goff[g + 1], a, b, c)
            for k in range(ngd):
                mu, sg = dim_hyper(state, G, ngd, hier, frozen_mu, frozen_sg, k)
                tot += log_normal_pdf(state[g * ngd + k], mu, sg)
        if hier == 1:
            base = G * ngd
            for k in range(ngd):
                t = state[base + ngd + k]
                tot += log_normal_pdf(state[base + k], 0.0, dim_mu_scale[k])
                tot += log_half_normal_pdf(math.exp(t), dim_sg_scale[k]) + t
        return tot

    @decorate
    def chol_small(A, out, d, jitter):
        # lower Cholesky factor of A[:d,:d] + jitter*I, with a diagonal
        # fallback when the accumulated covariance is not yet posdef
        ok = True
        for i in range(d):
            for j in range(d):
                out[i, j] = 0.0
        for i in range(d):
            s = A[i, i] + jitter
            for k in range(i):
                s -= out[i, k] * out[i, k]
            if s <= 0.0:
                ok = False
                break
            out[i, i] = math.sqrt(s)
            for j in range(i + 1, d):
                t = A[j, i]
                for k in range(i):
                    t -= out[j, k] * out[i, k]
                out[j, i] = t / out[i, i]
        if not ok:
            for i in range(d):
                for j in range(d):
                    out[i, j] = 0.0
                v = A[i, i] + jitter
                out[i, i] = math.sqrt(v) if v > 0.0 else math.sqrt(jitter)

    @decorate
    def run_chain(L, M, y, goff, ngd, hier,
                  dim_mu_scale, dim_sg_scale, frozen_mu, frozen_sg,
                  burn_in, n_samples, target_accept, adapt_window, use_refresh,
                  init_state, normals, uniforms,
                  draws, rw_accept, rw_prop, ind_accept, ind_prop,
                  aux_accept, aux_prop):
        G = goff.size - 1
        n_group = G * ngd
        n_params = n_group + (2 * ngd if hier == 1 else 0)
        n_blocks = G + (ngd if hier == 1 else 0)
        base = n_group
        iters = burn_in + n_samples

        state = init_state.copy()
        prop = np.empty(n_params)
        xnew = np.empty(3)
        dvec = np.empty(3)
        dvec2 = np.empty(3)
        covs = np.empty((3, 3))
        loggrp = np.empty(G)
        logprop = np.empty(G)
        for g in range(G):
            a, b, c = group_abc(state, g, ngd)
            loggrp[g] = group_loglik(L, M, y, goff[g], goff[g + 1], a, b, c)
            if math.isnan(loggrp[g]):
                return 1

        # adaptation state: blocks 0..G-1 are group blocks (dim ngd),
        # blocks G..G+ngd-1 are hyper pairs (dim 2)
        bmean = np.zeros((n_blocks, 3))
        bM2 = np.zeros((n_blocks, 3, 3))
        bchol = np.zeros((n_blocks, 3, 3))
        blogscale = np.zeros(n_blocks)
        ssd = np.empty(n_blocks)
        bdim = np.empty(n_blocks, np.int64)
        wacc = np.zeros(n_blocks)
        wprop = np.zeros(n_blocks)
        for b in range(n_blocks):
            d = ngd if b < G else 2
            bdim[b] = d
            ssd[b] = 2.38 / math.sqrt(d)
            for i in range(d):
                if b < G:
                    if hier == 1:
                        sd = math.sqrt(dim_mu_scale[i] ** 2 + dim_sg_scale[i] ** 2)
                    else:
                        sd = frozen_sg[i]
                else:
                    sd = dim_mu_scale[b - G] if i == 0 else 0.75
                bchol[b, i, i] = 0.3 * sd
        count = 0.0
        win_idx = 0
        adapt_start = burn_in // 5  # skip the initial transient when
        # accumulating proposal covariances

        for it in range(iters):
            post = it >= burn_in

            # ---- global refresh: ancestral proposal from the prior ----
            if use_refresh == 1:
                noff = 0
                if hier == 1:
                    for k in range(ngd):
                        mu = dim_mu_scale[k] * normals[it, k]
                        s = abs(dim_sg_scale[k] * normals[it, ngd + k])
                        if s < 1e-300:
                            s = 1e-300
                        prop[base + k] = mu
                        prop[base + ngd + k] = math.log(s)
                    noff = 2 * ngd
                for g in range(G):
                    for k in range(ngd):
                        if hier == 1:
                            mu = prop[base + k]
                            sg = math.exp(prop[base + ngd + k])
                        else:
                            mu = frozen_mu[k]
                            sg = frozen_sg[k]
                        prop[g * ngd + k] = mu + sg * normals[it, noff + g * ngd + k]
                newtot = 0.0
                oldtot = 0.0
                for g in range(G):
                    a, b, c = group_abc(prop, g, ngd)
                    logprop[g] = group_loglik(L, M, y, goff[g], goff[g + 1], a, b, c)
                    if math.isnan(logprop[g]):
                        return 1
                    newtot += logprop[g]
                    oldtot += loggrp[g]
                if post:
                    aux_prop[0] += 1
                if math.log(uniforms[it, 0]) < newtot - oldtot:
                    for j in range(n_params):
                        state[j] = prop[j]
                    for g in range(G):
                        loggrp[g] = logprop[g]
                    if post:
                        aux_accept[0] += 1

            # ---- per-group blocks: random walk, then conditional-prior ----
            for g in range(G):
                off = n_params + g * ngd
                sc = math.exp(blogscale[g]) * ssd[g]
                for i in range(ngd):
                    dx = 0.0
                    for m in range(i + 1):
                        dx += bchol[g, i, m] * normals[it, off + m]
                    xnew[i] = state[g * ngd + i] + sc * dx
                if ngd == 3:
                    a2, b2, c2 = math.exp(xnew[0]), math.exp(xnew[1]), xnew[2]
                else:
                    a2 = math.exp(xnew[0])
                    b2, c2 = a2, xnew[1]
                newll = group_loglik(L, M, y, goff[g], goff[g + 1], a2, b2, c2)
                if math.isnan(newll):
                    return 1
                logr = newll - loggrp[g]
                for k in range(ngd):
                    mu, sg = dim_hyper(state, G, ngd, hier, frozen_mu, frozen_sg, k)
                    logr += (log_normal_pdf(xnew[k], mu, sg)
                             - log_normal_pdf(state[g * ngd + k], mu, sg))
                if post:
                    rw_prop[g] += 1
                else:
                    wprop[g] += 1
                if math.log(uniforms[it, 1 + g]) < logr:
                    for k in range(ngd):
                        state[g * ngd + k] = xnew[k]
                    loggrp[g] = newll
                    if post:
                        rw_accept[g] += 1
                    else:
                        wacc[g] += 1

                if use_refresh == 1:
                    off = n_params + n_group + g * ngd
                    for k in range(ngd):
                        mu, sg = dim_hyper(state, G, ngd, hier, frozen_mu, frozen_sg, k)
                        xnew[k] = mu + sg * normals[it, off + k]
                    if ngd == 3:
                        a2, b2, c2 = math.exp(xnew[0]), math.exp(xnew[1]), xnew[2]
                    else:
                        a2 = math.exp(xnew[0])
                        b2, c2 = a2, xnew[1]
                    newll = group_loglik(L, M, y, goff[g], goff[g + 1], a2, b2, c2)
                    if math.isnan(newll):
                        return 1
                    if post:
                        ind_prop[g] += 1
                    if math.log(uniforms[it, 1 + G + g]) < newll - loggrp[g]:
                        for k in range(ngd):
                            state[g * ngd + k] = xnew[k]
                        loggrp[g] = newll
                        if post:
                            ind_accept[g] += 1

            # ---- hyper pairs: random walk, then hyperprior refresh ----
            if hier == 1:
                for k in range(ngd):
                    blk = G + k
                    off = n_params + 2 * n_group + 2 * k
                    sc = math.exp(blogscale[blk]) * ssd[blk]
                    mu0 = state[base + k]
                    t0 = state[base + ngd + k]
                    sg0 = math.exp(t0)
                    mu1 = mu0 + sc * bchol[blk, 0, 0] * normals[it, off]
                    t1 = t0 + sc * (bchol[blk, 1, 0] * normals[it, off]
                                    + bchol[blk, 1, 1] * normals[it, off + 1])
                    sg1 = math.exp(t1)
                    logr = (log_normal_pdf(mu1, 0.0, dim_mu_scale[k])
                            - log_normal_pdf(mu0, 0.0, dim_mu_scale[k])
                            + log_half_normal_pdf(sg1, dim_sg_scale[k])
                            - log_half_normal_pdf(sg0, dim_sg_scale[k])
                            + (t1 - t0))
                    for g in range(G):
                        xg = state[g * ngd + k]
                        logr += (log_normal_pdf(xg, mu1, sg1)
                                 - log_normal_pdf(xg, mu0, sg0))
                    if post:
                        rw_prop[blk] += 1
                    else:
                        wprop[blk] += 1
                    if math.log(uniforms[it, 1 + 2 * G + k]) < logr:
                        state[base + k] = mu1
                        state[base + ngd + k] = t1
                        if post:
                            rw_accept[blk] += 1
                        else:
                            wacc[blk] += 1

                    if use_refresh == 1:
                        off = n_params + 2 * n_group + 2 * ngd + 2 * k
                        mu1 = dim_mu_scale[k] * normals[it, off]
                        s = abs(dim_sg_scale[k] * normals[it, off + 1])
                        if s < 1e-300:
                            s = 1e-300
                        t1 = math.log(s)
                        mu0 = state[base + k]
                        sg0 = math.exp(state[base + ngd + k])
                        logr = 0.0
                        for g in range(G):
                            xg = state[g * ngd + k]
                            logr += (log_normal_pdf(xg, mu1, s)
                                     - log_normal_pdf(xg, mu0, sg0))
                        if post:
                            ind_prop[blk] += 1
                        if math.log(uniforms[it, 1 + 2 * G + ngd + k]) < logr:
                            state[base + k] = mu1
                            state[base + ngd + k] = t1
                            if post:
                                ind_accept[blk] += 1

            # ---- adaptation bookkeeping (burn-in only) ----
            if not post and it >= adapt_start:
                count += 1.0
                for b in range(n_blocks):
                    d = bdim[b]
                    for i in range(d):
                        if b < G:
                            xnew[i] = state[b * ngd + i]
                        elif i == 0:
                            xnew[i] = state[base + (b - G)]
                        else:
                            xnew[i] = state[base + ngd + (b - G)]
                    for i in range(d):
                        dvec[i] = xnew[i] - bmean[b, i]
                        bmean[b, i] += dvec[i] / count
                        dvec2[i] = xnew[i] - bmean[b, i]
                    for i in range(d):
                        for j in range(d):
                            bM2[b, i, j] += dvec[i] * dvec2[j]
                if (it + 1) % adapt_window == 0:
                    win_idx += 1
                    step = 1.0 / math.sqrt(win_idx)
                    if step > 0.5:
                        step = 0.5
                    for b in range(n_blocks):
                        d = bdim[b]
                        if wprop[b] > 0:
                            rate = wacc[b] / wprop[b]
                            blogscale[b] += step * (rate - target_accept)
                            if blogscale[b] > 4.0:
                                blogscale[b] = 4.0
                            elif blogscale[b] < -8.0:
                                blogscale[b] = -8.0
                        if count > 4 * d:
                            for i in range(d):
                                for j in range(d):
                                    covs[i, j] = (0.5 * (bM2[b, i, j] + bM2[b, j, i])
                                                  / (count - 1.0))
                            chol_small(covs, bchol[b], d, 1e-8)
                        wacc[b] = 0.0
                        wprop[b] = 0.0

            if post:
                for j in range(n_params):
                    draws[it - burn_in, j] = state[j]
        return 0

    @decorate
    def theta_accuracy_draws(a, b, c, L, M, pred, lab_correct, n_total, out):
        # per-draw group accuracy: labeled correct count plus summed latent
        # correctness of unlabeled examples, over the group size
        T = a.size
        n = L.size
        for t in range(T):
            at, bt, ct = a[t], b[t], c[t]
            s = 0.0
            for j in range(n):
                f = logistic(ct + at * L[j] - bt * M[j])
                if pred[j]:
                    s += f
                else:
                    s += 1.0 - f
            out[t] = (lab_correct + s) / n_total
        return 0

    @decorate
    def conditional_sums_draws(a, b, c, L, M, pred, positive, out_num, out_den):
        # per-draw sums of class-probability weights: out_den gets the
        # expected class count, out_num its share with yhat = 1
        T = a.size
        n = L.size
        for t in range(T):
            at, bt, ct = a[t], b[t], c[t]
            num = 0.0
            den = 0.0
            for j in range(n):
                f = logistic(ct + at * L[j] - bt * M[j])
                w = f if positive else 1.0 - f
                den += w
                if pred[j]:
                    num += w
            out_num[t] = num
            out_den[t] = den
        return 0

    return SimpleNamespace(
        logistic=logistic,
        log_normal_pdf=log_normal_pdf,
        log_half_normal_pdf=log_half_normal_pdf,
        group_loglik=group_loglik,
        group_abc=group_abc,
        target_logpdf=target_logpdf,
        chol_small=chol_small,
        run_chain=run_chain,
        theta_accuracy_draws=theta_accuracy_draws,
        conditional_sums_draws=conditional_sums_draws,
    )


KERNELS_PY = _build(lambda f: f)
KERNELS_NB = _build(numba.njit(cache=True)) if NUMBA_AVAILABLE else None
ACTIVE = KERNELS_NB if USE_NUMBA else KERNELS_PY


def active_backend() -> str:
    return "numba" if USE_NUMBA else "numpy"


# ---------------------------------------------------------------------
# vectorized numpy fallbacks for the per-draw reductions; used when the
# numba build is disabled or unavailable
# ---------------------------------------------------------------------

def sigmoid_np(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def theta_accuracy_draws_np(a, b, c, L, M, pred, lab_correct, n_total,
                            out, chunk: int = 128):
    for t0 in range(0, a.size, chunk):
        t1 = min(t0 + chunk, a.size)
        eta = (c[t0:t1, None] + a[t0:t1, None] * L[None, :]
               - b[t0:t1, None] * M[None, :])
        f = sigmoid_np(eta)
        z = np.where(pred[None, :], f, 1.0 - f)
        out[t0:t1] = (lab_correct + z.sum(axis=1)) / n_total
    return 0


def conditional_sums_draws_np(a, b, c, L, M, pred, positive,
                              out_num, out_den, chunk: int = 128):
    for t0 in range(0, a.size, chunk):
        t1 = min(t0 + chunk, a.size)
        eta = (c[t0:t1, None] + a[t0:t1, None] * L[None, :]
               - b[t0:t1, None] * M[None, :])
        f = sigmoid_np(eta)
        w = f if positive else 1.0 - f
        out_den[t0:t1] = w.sum(axis=1)
        out_num[t0:t1] = np.where(pred[None, :], w, 0.0).sum(axis=1)
    return 0


# ---------------------------------------------------------------------
# dispatching wrappers
# ---------------------------------------------------------------------

def _f64(x) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(x, dtype=np.float64))


def run_chain(*args):
    return ACTIVE.run_chain(*args)


def target_logpdf(state, L, M, y, goff, ngd, hier,
                  dim_mu_scale, dim_sg_scale, frozen_mu, frozen_sg) -> float:
    return float(ACTIVE.target_logpdf(
        _f64(state), _f64(L), _f64(M), _f64(y),
        np.ascontiguousarray(goff, dtype=np.int64), ngd, hier,
        _f64(dim_mu_scale), _f64(dim_sg_scale), _f64(frozen_mu), _f64(frozen_sg)))


def theta_accuracy_draws(a, b, c, L, M, pred, lab_correct: float,
                         n_total: float) -> np.ndarray:
    a, b, c = _f64(a), _f64(b), _f64(c)
    out = np.empty(a.size)
    pred = np.ascontiguousarray(pred, dtype=np.bool_)
    if USE_NUMBA:
        ACTIVE.theta_accuracy_draws(a, b, c, _f64(L), _f64(M), pred,
                                    float(lab_correct), float(n_total), out)
    else:
        theta_accuracy_draws_np(a, b, c, _f64(L), _f64(M), pred,
                                float(lab_correct), float(n_total), out)
    return out


def conditional_sums_draws(a, b, c, L, M, pred,
                           positive: bool) -> tuple[np.ndarray, np.ndarray]:
    a, b, c = _f64(a), _f64(b), _f64(c)
    num = np.empty(a.size)
    den = np.empty(a.size)
    pred = np.ascontiguousarray(pred, dtype=np.bool_)
    if USE_NUMBA:
        ACTIVE.conditional_sums_draws(a, b, c, _f64(L), _f64(M), pred,
                                      bool(positive), num, den)
    else:
        conditional_sums_draws_np(a, b, c, _f64(L), _f64(M), pred,
                                  bool(positive), num, den)
    return num, den
