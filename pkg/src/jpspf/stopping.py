"""Per-slot optimal stopping: when to stop probing and transmit.

After ``j`` probes the scheduler holds ``w``, the best throughput-normalized
rate seen so far.  Stopping pays ``(1 - j*beta) * w``; one more probe pays
``(1 - (j+1)*beta) * E[w v S]`` where ``S`` is the next candidate's
normalized rate.  The problem is monotone, so the one-stage look-ahead
comparison is optimal.

At steady state the comparison collapses to ``kappa * w >= v_j`` with
fixed thresholds ``v_j`` solving ``v = g_j(v)``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

from .channel import RateModel

__all__ = [
    "ProbeContext",
    "ThresholdTable",
    "ThresholdError",
    "j_max",
    "lookahead_expectation",
    "dynamic_should_stop",
    "f_j",
    "g_j",
    "solve_threshold",
    "build_threshold_table",
    "static_should_stop",
]

BISECT_TOL = 1e-10
_MAX_EXPANSIONS = 200
_MAX_BISECTIONS = 400


class ThresholdError(RuntimeError):
    pass


def j_max(K: int, beta: float) -> int:
    """Largest number of probes per slot, ``min(K, floor(1/beta))``."""
    if not 0 < beta < 1:
        raise ValueError(f"beta must lie in (0, 1), got {beta!r}")
    if K < 1:
        raise ValueError("K must be at least 1")
    # 1/beta may land a ulp below an integer
    return min(K, int(math.floor(1.0 / beta + 1e-12)))


@dataclass(frozen=True)
class ProbeContext:
    beta: float
    j: int
    w: float
    next_mean: float
    j_max: int

    def __post_init__(self):
        if not 0 <= self.j <= self.j_max:
            raise ValueError(f"j={self.j} outside [0, {self.j_max}]")
        if self.w < 0:
            raise ValueError("w must be nonnegative")


def lookahead_expectation(model: RateModel, mean: float, w: float) -> float:
    """``E[max(w, mean * X)] = w + mean * E[(X - w/mean)^+]``."""
    if mean <= 0:
        raise ValueError("candidate mean must be positive")
    return w + mean * model.partial_expectation(w / mean)


def f_j(model: RateModel, beta: float, j: int, next_mean: float, w: float) -> float:
    """Stop-minus-continue margin after ``j`` probes with best value ``w``."""
    return (1.0 - j * beta) * w - (1.0 - (j + 1) * beta) * lookahead_expectation(
        model, next_mean, w)


def dynamic_should_stop(ctx: ProbeContext, model: RateModel) -> bool:
    if ctx.j >= ctx.j_max:
        return True
    return f_j(model, ctx.beta, ctx.j, ctx.next_mean, ctx.w) >= 0.0


def _coef(beta: float, j: int) -> float:
    return max(1.0 / beta - (j + 1), 0.0)


def g_j(model: RateModel, beta: float, j: int, v: float) -> float:
    """``(1/beta - (j+1)) * E[(X - v)^+]``."""
    c = _coef(beta, j)
    if c == 0.0:
        return 0.0
    return c * model.partial_expectation(v)


def solve_threshold(model: RateModel, beta: float, j: int) -> float:
    """Fixed point ``v = g_j(v)`` by bracketed bisection.

    The residual ``v - g_j(v)`` is strictly increasing, negative at 0 and
    positive for large ``v``; the bracket starts at [0, 1] and doubles.
    """
    if _coef(beta, j) == 0.0:
        return 0.0

    def resid(v):
        return v - g_j(model, beta, j, v)

    lo, hi = 0.0, 1.0
    for _ in range(_MAX_EXPANSIONS):
        if resid(hi) > 0:
            break
        lo, hi = hi, 2.0 * hi
    else:
        raise ThresholdError(f"no bracket for j={j}, beta={beta}")

    for _ in range(_MAX_BISECTIONS):
        mid = 0.5 * (lo + hi)
        r = resid(mid)
        if abs(r) <= BISECT_TOL:
            return mid
        if r > 0:
            hi = mid
        else:
            lo = mid
    raise ThresholdError(f"bisection did not converge for j={j}, beta={beta}")


@dataclass(frozen=True)
class ThresholdTable:
    """Static thresholds ``v_0 > ... > v_{J_max - 1}``, ``v_{J_max} = 0``."""

    beta: float
    thresholds: tuple[float, ...]
    kappa: float

    @property
    def j_max(self) -> int:
        return len(self.thresholds) - 1

    def with_kappa(self, kappa: float) -> "ThresholdTable":
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        return ThresholdTable(self.beta, self.thresholds, float(kappa))

    def to_csv(self) -> str:
        """Rows ``j, v_j`` for the solved thresholds ``j < J_max``."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["j", "v_j"])
        for j, v in enumerate(self.thresholds[:-1]):
            w.writerow([j, repr(float(v))])
        return buf.getvalue()


def build_threshold_table(model: RateModel, beta: float, K: int,
                          kappa: float = 1.0) -> ThresholdTable:
    if not kappa > 0:
        raise ValueError("kappa must be positive")
    jm = j_max(K, beta)
    vs = [solve_threshold(model, beta, j) for j in range(jm)] + [0.0]
    return ThresholdTable(beta, tuple(vs), float(kappa))


def static_should_stop(table: ThresholdTable, j: int, w: float) -> bool:
    """Stop after ``j`` probes iff ``kappa * w >= v_j``."""
    if not 1 <= j <= table.j_max:
        raise ValueError(f"j={j} outside [1, {table.j_max}]")
    return table.kappa * w >= table.thresholds[j]
