"""Inner training loops, in a numba-compiled and a plain-numpy flavour.

The numba path is used when numba imports and ``SCOREFLOW_BACKEND`` is not
set to ``numpy``. Both paths implement the same update rule and agree to
rounding error; within one backend results are bit-reproducible.

Kernel contract (score-DPO): ``theta`` is updated in place. For sampled pair
``i = order[t]`` with features ``X[i]``, winner ``yw[i]``, loser ``yl[i]``,
reward weights ``cw[i]``/``cl[i]`` and frozen reference log-probs
``ref_w[i]``/``ref_l[i]``::

    r_w = beta * (log pi(yw|x) - ref_w)        r_l = beta * (log pi(yl|x) - ref_l)
    loss = softplus(-(cw * r_w - cl * r_l))
    grad = -sigmoid(cl * r_l - cw * r_w) * beta * (cw * dlogpi(yw) - cl * dlogpi(yl))

Returns (losses[S], grad_norms[steps], in_ball, bad_step) where ``in_ball``
counts members with |r| <= 1 and ``bad_step`` is the first step with a
non-finite gradient (-1 if none; the loop stops there).
"""

from __future__ import annotations

import math
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None

_requested = os.environ.get("SCOREFLOW_BACKEND", "numba").strip().lower()
if _requested not in ("numba", "numpy"):
    raise ImportError(f"SCOREFLOW_BACKEND must be 'numba' or 'numpy', got {_requested!r}")
BACKEND = "numba" if (_requested == "numba" and numba is not None) else "numpy"


def _score_dpo_loop(theta, X, yw, yl, cw, cl, ref_w, ref_l, order, beta, eta, batch_size):
    B, F = theta.shape
    S = order.shape[0]
    n_steps = (S + batch_size - 1) // batch_size
    losses = np.zeros(S)
    grad_norms = np.zeros(n_steps)
    grad = np.zeros((B, F))
    z = np.zeros(B)
    p = np.zeros(B)
    coef = np.zeros(B)
    in_ball = 0
    bad_step = -1
    t = 0
    for step in range(n_steps):
        grad[:, :] = 0.0
        stop = min(S, t + batch_size)
        count = stop - t
        while t < stop:
            i = order[t]
            for b in range(B):
                acc = 0.0
                for f in range(F):
                    acc += theta[b, f] * X[i, f]
                z[b] = acc
            zmax = z[0]
            for b in range(1, B):
                if z[b] > zmax:
                    zmax = z[b]
            total = 0.0
            for b in range(B):
                p[b] = math.exp(z[b] - zmax)
                total += p[b]
            lse = zmax + math.log(total)
            for b in range(B):
                p[b] /= total
            w = yw[i]
            l = yl[i]
            r_w = beta * ((z[w] - lse) - ref_w[i])
            r_l = beta * ((z[l] - lse) - ref_l[i])
            if abs(r_w) <= 1.0:
                in_ball += 1
            if abs(r_l) <= 1.0:
                in_ball += 1
            delta = cw[i] * r_w - cl[i] * r_l
            # softplus(-delta) and sigmoid(-delta) without overflow
            if delta >= 0.0:
                e = math.exp(-delta)
                losses[t] = math.log1p(e)
                sig = e / (1.0 + e)
            else:
                e = math.exp(delta)
                losses[t] = -delta + math.log1p(e)
                sig = 1.0 / (1.0 + e)
            scale = -sig * beta
            a = cw[i]
            c = cl[i]
            for b in range(B):
                coef[b] = -(a - c) * p[b]
            coef[w] += a
            coef[l] -= c
            for b in range(B):
                g = scale * coef[b]
                for f in range(F):
                    grad[b, f] += g * X[i, f]
            t += 1
        sq = 0.0
        for b in range(B):
            for f in range(F):
                grad[b, f] /= count
                sq += grad[b, f] * grad[b, f]
        if not math.isfinite(sq):
            bad_step = step
            break
        grad_norms[step] = math.sqrt(sq)
        for b in range(B):
            for f in range(F):
                theta[b, f] -= eta * grad[b, f]
    return losses, grad_norms, in_ball, bad_step


def _sft_loop(theta, X, y, order, eta, batch_size):
    B, F = theta.shape
    S = order.shape[0]
    n_steps = (S + batch_size - 1) // batch_size
    losses = np.zeros(S)
    grad_norms = np.zeros(n_steps)
    grad = np.zeros((B, F))
    z = np.zeros(B)
    p = np.zeros(B)
    bad_step = -1
    t = 0
    for step in range(n_steps):
        grad[:, :] = 0.0
        stop = min(S, t + batch_size)
        count = stop - t
        while t < stop:
            i = order[t]
            for b in range(B):
                acc = 0.0
                for f in range(F):
                    acc += theta[b, f] * X[i, f]
                z[b] = acc
            zmax = z[0]
            for b in range(1, B):
                if z[b] > zmax:
                    zmax = z[b]
            total = 0.0
            for b in range(B):
                p[b] = math.exp(z[b] - zmax)
                total += p[b]
            for b in range(B):
                p[b] /= total
            k = y[i]
            losses[t] = -(z[k] - zmax - math.log(total))
            for b in range(B):
                g = -p[b]
                if b == k:
                    g += 1.0
                for f in range(F):
                    grad[b, f] += g * X[i, f]
            t += 1
        sq = 0.0
        for b in range(B):
            for f in range(F):
                grad[b, f] /= count
                sq += grad[b, f] * grad[b, f]
        if not math.isfinite(sq):
            bad_step = step
            break
        grad_norms[step] = math.sqrt(sq)
        for b in range(B):
            for f in range(F):
                theta[b, f] += eta * grad[b, f]
    return losses, grad_norms, bad_step


def _log_softmax_rows(z):
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def _score_dpo_numpy(theta, X, yw, yl, cw, cl, ref_w, ref_l, order, beta, eta, batch_size):
    S = order.shape[0]
    n_steps = (S + batch_size - 1) // batch_size
    losses = np.zeros(S)
    grad_norms = np.zeros(n_steps)
    in_ball = 0
    bad_step = -1
    for step in range(n_steps):
        idx = order[step * batch_size:(step + 1) * batch_size]
        xb = X[idx]
        lp = _log_softmax_rows(xb @ theta.T)
        rows = np.arange(len(idx))
        w, l = yw[idx], yl[idx]
        r_w = beta * (lp[rows, w] - ref_w[idx])
        r_l = beta * (lp[rows, l] - ref_l[idx])
        in_ball += int(np.count_nonzero(np.abs(r_w) <= 1.0) + np.count_nonzero(np.abs(r_l) <= 1.0))
        a, c = cw[idx], cl[idx]
        delta = a * r_w - c * r_l
        losses[step * batch_size:step * batch_size + len(idx)] = np.logaddexp(0.0, -delta)
        sig = np.exp(-np.logaddexp(0.0, delta))  # sigmoid(-delta)
        coef = -(a - c)[:, None] * np.exp(lp)
        coef[rows, w] += a
        coef[rows, l] -= c
        coef *= (-sig * beta)[:, None]
        grad = coef.T @ xb / len(idx)
        norm = float(np.sqrt(np.sum(grad * grad)))
        if not math.isfinite(norm):
            bad_step = step
            break
        grad_norms[step] = norm
        theta -= eta * grad
    return losses, grad_norms, in_ball, bad_step


def _sft_numpy(theta, X, y, order, eta, batch_size):
    S = order.shape[0]
    n_steps = (S + batch_size - 1) // batch_size
    losses = np.zeros(S)
    grad_norms = np.zeros(n_steps)
    bad_step = -1
    for step in range(n_steps):
        idx = order[step * batch_size:(step + 1) * batch_size]
        xb = X[idx]
        lp = _log_softmax_rows(xb @ theta.T)
        rows = np.arange(len(idx))
        losses[step * batch_size:step * batch_size + len(idx)] = -lp[rows, y[idx]]
        coef = -np.exp(lp)
        coef[rows, y[idx]] += 1.0
        grad = coef.T @ xb / len(idx)
        norm = float(np.sqrt(np.sum(grad * grad)))
        if not math.isfinite(norm):
            bad_step = step
            break
        grad_norms[step] = norm
        theta += eta * grad
    return losses, grad_norms, bad_step


if numba is not None:
    _score_dpo_jit = numba.njit(cache=True)(_score_dpo_loop)
    _sft_jit = numba.njit(cache=True)(_sft_loop)
else:  # pragma: no cover
    _score_dpo_jit = _sft_jit = None

_IMPLS = {
    "numba": {"score_dpo": _score_dpo_jit, "sft": _sft_jit},
    "numpy": {"score_dpo": _score_dpo_numpy, "sft": _sft_numpy},
}


def resolve(backend: str | None) -> str:
    backend = backend or BACKEND
    if backend not in _IMPLS or _IMPLS[backend]["score_dpo"] is None:
        raise ValueError(f"backend {backend!r} is not available")
    return backend


def score_dpo_sgd(theta, X, yw, yl, cw, cl, ref_w, ref_l, order, beta, eta, batch_size, backend=None):
    fn = _IMPLS[resolve(backend)]["score_dpo"]
    return fn(
        theta,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(yw, dtype=np.int64),
        np.ascontiguousarray(yl, dtype=np.int64),
        np.ascontiguousarray(cw, dtype=np.float64),
        np.ascontiguousarray(cl, dtype=np.float64),
        np.ascontiguousarray(ref_w, dtype=np.float64),
        np.ascontiguousarray(ref_l, dtype=np.float64),
        np.ascontiguousarray(order, dtype=np.int64),
        float(beta),
        float(eta),
        int(batch_size),
    )


def sft_sgd(theta, X, y, order, eta, batch_size, backend=None):
    fn = _IMPLS[resolve(backend)]["sft"]
    return fn(
        theta,
        np.ascontiguousarray(X, dtype=np.float64),
        np.ascontiguousarray(y, dtype=np.int64),
        np.ascontiguousarray(order, dtype=np.int64),
        float(eta),
        int(batch_size),
    )
