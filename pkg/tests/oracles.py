"""Reference implementations used as test oracles.

Everything here is written with plain Python loops and ``math`` so it shares
no code path with the vectorized library implementation.
"""

from __future__ import annotations

import math

import numpy as np

from wstl_explain.wstl import And, Eventually, Globally, Literal, Not, Or, Top


def feature_value(pred, state) -> float:
    kind, args = pred.feature.kind, pred.feature.args
    if kind == "coordinate":
        return float(state[args[0]])
    a0, a1, b0, b1 = args
    d = math.sqrt(sum((state[a0 + k] - state[b0 + k]) ** 2 for k in range(a1 - a0)))
    return d if kind == "distance" else -d


def pred_rob(pred, state, negated=False) -> float:
    f = feature_value(pred, state)
    if f >= pred.c:
        r = (f - pred.c) / (pred.sup_f - pred.c)
    else:
        r = -(pred.c - f) / (pred.c - pred.inf_f)
    r = max(-1.0, min(1.0, r))
    return -r if negated else r


def ratio(w, r, sign, sigma) -> float:
    """sum w r e^(sign r/sigma) / sum w e^(sign r/sigma), in long-double-free plain floats."""
    pairs = [(wi, ri) for wi, ri in zip(w, r) if wi > 0]
    top = max(wi for wi, _ in pairs)
    pairs = [(wi / top, ri) for wi, ri in pairs]
    m = max(sign * ri / sigma for _, ri in pairs)
    num = math.fsum(wi * ri * math.exp(sign * ri / sigma - m) for wi, ri in pairs)
    den = math.fsum(wi * math.exp(sign * ri / sigma - m) for wi, ri in pairs)
    return num / den


def exact(w, r, sign) -> float:
    vals = [ri for wi, ri in zip(w, r) if wi > 0]
    return max(vals) if sign > 0 else min(vals)


def evaluate(phi, states, t=0, sigma=0.5, mode="smooth") -> float:
    """Independent recursive robustness evaluator."""
    agg = (lambda w, r, s: ratio(w, r, s, sigma)) if mode == "smooth" else exact
    if isinstance(phi, Top):
        return 1.0
    if isinstance(phi, Literal):
        return pred_rob(phi.predicate, states[t], phi.negated)
    if isinstance(phi, Not):
        return -evaluate(phi.child, states, t, sigma, mode)
    if isinstance(phi, And):
        return agg(phi.weights, [evaluate(c, states, t, sigma, mode) for c in phi.children], -1)
    if isinstance(phi, Or):
        return agg(phi.weights, [evaluate(c, states, t, sigma, mode) for c in phi.children], +1)
    if isinstance(phi, (Globally, Eventually)):
        vals = [evaluate(phi.child, states, t + k, sigma, mode) for k in range(phi.interval.a, phi.interval.b + 1)]
        return agg(phi.weights, vals, -1 if isinstance(phi, Globally) else +1)
    raise TypeError(phi)


def softmax_masked(scores, mask) -> np.ndarray:
    out = np.zeros_like(scores, dtype=float)
    idx = [(i, j) for i in range(scores.shape[0]) for j in range(scores.shape[1]) if mask[i, j]]
    m = max(scores[i, j] for i, j in idx)
    z = math.fsum(math.exp(scores[i, j] - m) for i, j in idx)
    for i, j in idx:
        out[i, j] = math.exp(scores[i, j] - m) / z
    return out


def template_oracle(WF, WG, literals, states, sigma=0.5) -> float:
    """Template robustness from effective matrices by explicit loops."""
    H = len(states) - 1

    def clause(W, sign):
        vals = []
        for t in range(H + 1):
            rows, rw = [], []
            for i in range(W.shape[0]):
                s = math.fsum(W[i])
                if s <= 0:
                    continue
                lits = [pred_rob(lit.predicate, states[t], lit.negated) for lit in literals]
                rows.append(ratio(list(W[i]), lits, +1, sigma))
                rw.append(s)
            vals.append(ratio(rw, rows, -1, sigma))
        return ratio([1.0 / (H + 1)] * (H + 1), vals, sign, sigma)

    parts, pw = [], []
    if WF.sum() > 0:
        parts.append(clause(WF, +1))
        pw.append(0.5)
    if WG.sum() > 0:
        parts.append(clause(WG, -1))
        pw.append(0.5)
    return parts[0] if len(parts) == 1 else ratio(pw, parts, -1, sigma)


def rt_oracle(WF, WG) -> float:
    n = WF.shape[0]
    total = 0.0
    for j in range(n):
        f = max(sum(WF[i, j] for i in range(n)), sum(WF[i, j + n] for i in range(n)))
        g = max(sum(WG[i, j] for i in range(n)), sum(WG[i, j + n] for i in range(n)))
        total += f * g
    return total


def rd_oracle(W) -> float:
    total = 0.0
    for i in range(W.shape[0]):
        for j in range(i + 1, W.shape[0]):
            for k in range(W.shape[1]):
                total += W[i, k] * W[j, k]
    return total


def central_diff(f, x, h=1e-5) -> np.ndarray:
    g = np.zeros_like(x)
    for i in range(x.size):
        xp, xm = x.copy(), x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (f(xp) - f(xm)) / (2 * h)
    return g
