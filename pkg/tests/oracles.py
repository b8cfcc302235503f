"""Independent reference computations used to freeze expected values.

None of these call into the code paths they check: thresholds come from
damped fixed-point iteration rather than bisection, the stopping value
from exhaustive backward induction rather than the look-ahead rule.
"""

import math

import numpy as np


def fixed_point_threshold(coef, pe, damping=0.5, iters=20_000, tol=1e-14):
    """Solve ``v = coef * pe(v)`` by damped iteration."""
    if coef == 0:
        return 0.0
    v = 1.0
    for _ in range(iters):
        nxt = (1 - damping) * v + damping * coef * pe(v)
        if abs(nxt - v) < tol:
            return nxt
        v = nxt
    return v


def exp_thresholds(beta, jm):
    """Exponential thresholds ``v_j`` for ``j < jm`` by fixed-point iteration."""
    return [fixed_point_threshold(max(round(1 / beta) - (j + 1), 0), lambda v: math.exp(-v))
            for j in range(jm)]


def dp_optimal_value(atoms, probs, mean, beta, jm):
    """Best expected reward over all stopping rules (backward induction).

    Candidates are i.i.d. ``mean * X``.  ``w`` only takes values in the
    finite set of reachable running maxima, so memoized recursion is exact.
    """
    memo = {}

    def cont(j, w):
        return sum(p * V(j + 1, max(w, mean * a)) for a, p in zip(atoms, probs))

    def V(j, w):
        if (j, w) not in memo:
            stop = (1 - j * beta) * w
            memo[j, w] = stop if j == jm else max(stop, cont(j, w))
        return memo[j, w]

    return cont(0, 0.0)


def rule_value(atoms, probs, mean, beta, jm, should_stop):
    """Expected reward of a stopping rule by enumerating every probe outcome.

    ``should_stop(j, w)`` is consulted after each probe ``j >= 1``.
    """
    def go(j, w, prob):
        if j > 0 and (j == jm or should_stop(j, w)):
            return prob * (1 - j * beta) * w
        return sum(go(j + 1, max(w, mean * a), prob * p) for a, p in zip(atoms, probs))

    return go(0, 0.0, 1.0)


def rejection_truncated_mean(sampler, accept, n, rng):
    out = []
    got = 0
    while got < n:
        x = sampler(rng, n)
        keep = x[accept(x)]
        out.append(keep)
        got += len(keep)
    return np.concatenate(out)[:n].mean()


def direct_stopping_gain(sample, thresholds, beta, n, rng):
    """Gain of the threshold rule by running it on ``n`` fresh i.i.d. slots.

    Stops at the first ``j`` with ``max(X_1..X_j) >= v_j``; ``v_{J_max}``
    must be 0 so every slot stops.
    """
    jm = len(thresholds) - 1
    x = sample(rng, (n, jm))
    running = np.maximum.accumulate(x, axis=1)
    hit = running >= np.asarray(thresholds[1:])
    j = hit.argmax(axis=1)  # 0-based index of the stopping probe
    reward = (1 - (j + 1) * beta) * running[np.arange(n), j]
    return reward.mean(), reward.std(ddof=1) / math.sqrt(n), np.bincount(j + 1, minlength=jm + 1)[1:] / n
